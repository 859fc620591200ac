#include <string>
#include <vector>

#include "svae/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return svae::run_cli(args);
}
