#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svae/network.hpp"
#include "svae/trainer.hpp"

namespace svae {

// On-disk formats. All multi-octet integers are little-endian; doubles are
// raw IEEE-754 bits. Both formats embed the model configuration so encoder,
// decoder and checkpoint mismatches fail fast instead of decoding garbage.

// Bitstream container ("SVAE"): header, then the hyperlatent payload, then
// the latent payload, each a raw range-coder stream.
struct BitstreamHeader {
  uint8_t version = 1;
  bool mean_removal = true;  // flags bit 0
  uint8_t q = 3;
  uint16_t channels = 0;
  uint32_t width = 0;   // pre-padding image size
  uint32_t height = 0;
  uint8_t pad_right = 0;
  uint8_t pad_bottom = 0;
  int16_t z_min = 0, z_max = 0;
  int16_t y_min = 0, y_max = 0;
};

struct BitstreamContainer {
  BitstreamHeader header;
  std::vector<uint8_t> z_payload;
  std::vector<uint8_t> y_payload;
};

std::vector<uint8_t> serialize_container(const BitstreamContainer& c);
BitstreamContainer parse_container(std::span<const uint8_t> bytes);

// Checkpoint ("SVCK"): config, training-config echo, step counter, then the
// ordered named parameter blobs. load(save(m)) is value-identical and
// save(load(file)) reproduces the file byte for byte.
struct Checkpoint {
  NetworkConfig config;
  TrainConfig train;
  uint64_t step = 0;
  ModelParams params;
};

std::vector<uint8_t> serialize_checkpoint(const ModelParams& params, const TrainConfig& train,
                                          uint64_t step);
Checkpoint parse_checkpoint(std::span<const uint8_t> bytes);

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainConfig& train, uint64_t step);
Checkpoint load_checkpoint(const std::string& path);

// All-zero parameter tensors with the shapes init_network would produce.
ModelParams model_skeleton(const NetworkConfig& config);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace svae
