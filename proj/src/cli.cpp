#include "svae/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "svae/codec.hpp"
#include "svae/container.hpp"
#include "svae/errors.hpp"
#include "svae/metrics.hpp"
#include "svae/trainer.hpp"

namespace svae {

namespace {

namespace fs = std::filesystem;

std::string format_psnr(double v) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct TrainArgs {
  std::string data, out, log;
  double lambda = 0.0;
  int64_t steps = 0;
  uint64_t seed = 0;
  int q = 3, channels = 48, hyper_channels = 32, kernel = 5;
  int crop = 64, batch = 8;
  double lr = 1e-4, lr_final = 1e-5, clip = 1.0;
  int64_t lr_drop = -1;
  int64_t ckpt_interval = 0;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  NetworkConfig config;
  config.channels = a.channels;
  config.q = a.q;
  config.kernel = a.kernel;
  config.hyper_channels = a.hyper_channels;

  TrainConfig train;
  train.lambda = a.lambda;
  train.batch_size = a.batch;
  train.crop = a.crop;
  train.steps = a.steps;
  train.lr_initial = a.lr;
  train.lr_final = a.lr_final;
  train.lr_drop_step = a.lr_drop;
  train.clip_norm = a.clip;
  train.seed = a.seed;
  train.validate();

  Dataset dataset = Dataset::load_directory(a.data, a.crop);
  ModelParams model = init_network(a.seed, config);
  Trainer trainer(model, train);

  const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
  std::ofstream log(log_path);
  if (!log) throw IoError(log_path + ": cannot open for writing");
  log << "step,lr,rate_bpp,distortion_mse,total\n";

  for (int64_t step = 0; step < a.steps; ++step) {
    Tensor batch = sample_batch(dataset, a.crop, a.batch, trainer.data_rng());
    const double lr = lr_schedule(step, train);
    const RdLossValue v = trainer.train_step(batch);
    log << step << "," << lr << "," << format_fixed(v.rate_bpp) << ","
        << format_fixed(v.distortion_mse) << "," << format_fixed(v.total) << "\n";
    if (!a.quiet && (step % 500 == 0 || step + 1 == a.steps))
      std::cerr << "step " << step << "/" << a.steps << " total=" << format_fixed(v.total)
                << " bpp=" << format_fixed(v.rate_bpp) << "\n";
    if (a.ckpt_interval > 0 && (step + 1) % a.ckpt_interval == 0 && step + 1 < a.steps)
      save_checkpoint(a.out, model, train, static_cast<uint64_t>(step + 1));
  }
  if (!log) throw IoError(log_path + ": write failed");
  save_checkpoint(a.out, model, train, static_cast<uint64_t>(a.steps));
  return kExitOk;
}

struct EncodeArgs {
  std::string model, in, out, recon;
  bool no_mean_removal = false;
};

int cmd_encode(const EncodeArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model);
  const Image img = read_image(a.in);
  const EncodeResult res = encode_image(ck.params, img, !a.no_mean_removal);
  write_file(a.out, res.container);
  if (!a.recon.empty()) write_image(a.recon, res.reconstruction);
  std::cout << "bpp=" << format_fixed(res.bpp) << "\n";
  return kExitOk;
}

int cmd_decode(const std::string& model_path, const std::string& in, const std::string& out) {
  const Checkpoint ck = load_checkpoint(model_path);
  const auto bytes = read_file(in);
  const Image img = decode_image(ck.params, bytes);
  write_image(out, img);
  return kExitOk;
}

// One image triple: prints "bpp,psnr_db".
std::pair<double, double> eval_one(const std::string& orig, const std::string& recon,
                                   const std::string& bin) {
  const Image a = read_image(orig);
  const Image b = read_image(recon);
  const uint64_t bytes = fs::file_size(bin);
  return {bpp(bytes, a.width, a.height), psnr(a, b)};
}

int cmd_eval(const std::string& orig, const std::string& recon, const std::string& bin) {
  if (fs::is_directory(orig)) {
    if (!fs::is_directory(recon) || !fs::is_directory(bin))
      throw MismatchError("eval: --orig is a directory, so --recon and --bin must be too");
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(orig))
      if (e.is_regular_file()) stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw DatasetError(DatasetError::Kind::Empty, orig + ": no images");
    auto find_with_ext = [](const fs::path& dir, const std::string& stem,
                            std::initializer_list<const char*> exts) -> std::string {
      for (const char* ext : exts) {
        fs::path p = dir / (stem + ext);
        if (fs::exists(p)) return p.string();
      }
      throw IoError((dir / stem).string() + ": no matching file");
    };
    double sum_bpp = 0.0, sum_psnr = 0.0;
    for (const auto& stem : stems) {
      const auto [b, p] =
          eval_one(find_with_ext(orig, stem, {".ppm", ".png"}),
                   find_with_ext(recon, stem, {".ppm", ".png"}),
                   find_with_ext(bin, stem, {".svae", ".bin"}));
      sum_bpp += b;
      sum_psnr += p;
      std::cout << stem << "," << format_fixed(b) << "," << format_psnr(p) << "\n";
    }
    const double n = static_cast<double>(stems.size());
    std::cout << "mean," << format_fixed(sum_bpp / n) << "," << format_psnr(sum_psnr / n)
              << "\n";
    return kExitOk;
  }
  const auto [b, p] = eval_one(orig, recon, bin);
  std::cout << format_fixed(b) << "," << format_psnr(p) << "\n";
  return kExitOk;
}

int cmd_rd_curve(const std::vector<std::string>& models, const std::string& data,
                 const std::string& out) {
  Dataset dataset = Dataset::load_directory(data, 1);
  RdCurve curve;
  curve.label = "rd";
  for (const auto& model_path : models) {
    const Checkpoint ck = load_checkpoint(model_path);
    double sum_bpp = 0.0, sum_psnr = 0.0;
    for (size_t i = 0; i < dataset.size(); ++i) {
      const Image& img = dataset.image(i);
      const EncodeResult res = encode_image(ck.params, img);
      const Image recon = decode_image(ck.params, res.container);
      sum_bpp += res.bpp;
      sum_psnr += psnr(img, recon);
    }
    RdPoint pt;
    pt.label = fs::path(model_path).stem().string();
    pt.bpp = sum_bpp / static_cast<double>(dataset.size());
    pt.psnr_db = sum_psnr / static_cast<double>(dataset.size());
    curve.points.push_back(pt);
  }
  curve.sort_and_check();
  export_rd_csv(out, {curve});
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{
      "svae: learned image codec with self-organized operational layers.\n"
      "Exit codes: 0 ok, 1 usage, 2 io, 3 format, 4 mismatch, 5 empty dataset,\n"
      "6 undersized image, 7 numeric, 8 internal."};
  app.require_subcommand(1);

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "train a model on a directory of images");
  train->add_option("--data", ta.data, "directory of PPM/PNG training images")->required();
  train->add_option("--lambda", ta.lambda, "rate-distortion tradeoff")->required();
  train->add_option("--steps", ta.steps, "optimization steps")->required();
  train->add_option("--seed", ta.seed, "master seed")->required();
  train->add_option("--out", ta.out, "output checkpoint path")->required();
  train->add_option("--q", ta.q, "generative neuron truncation order");
  train->add_option("--channels", ta.channels, "latent channels");
  train->add_option("--hyper-channels", ta.hyper_channels, "hyperprior channels");
  train->add_option("--kernel", ta.kernel, "SOL kernel size");
  train->add_option("--crop", ta.crop, "training crop (multiple of 64)");
  train->add_option("--batch", ta.batch, "mini-batch size");
  train->add_option("--lr", ta.lr, "initial learning rate");
  train->add_option("--lr-final", ta.lr_final, "learning rate after the drop");
  train->add_option("--lr-drop", ta.lr_drop, "drop step (default: steps/2)");
  train->add_option("--clip", ta.clip, "gradient norm clip");
  train->add_option("--log", ta.log, "training log CSV (default: <out>.log.csv)");
  train->add_option("--ckpt-interval", ta.ckpt_interval, "checkpoint every N steps");
  train->add_flag("--quiet", ta.quiet, "suppress progress output");

  EncodeArgs ea;
  CLI::App* encode = app.add_subcommand("encode", "compress an image to a bitstream");
  encode->add_option("--model", ea.model, "checkpoint")->required();
  encode->add_option("--in", ea.in, "input image (PPM or PNG)")->required();
  encode->add_option("--out", ea.out, "output bitstream")->required();
  encode->add_option("--recon", ea.recon, "also write the encoder-side reconstruction");
  encode->add_flag("--no-mean-removal", ea.no_mean_removal,
                   "code round(y) instead of round(y - mu)");

  std::string dm, din, dout;
  CLI::App* decode = app.add_subcommand("decode", "decompress a bitstream to an image");
  decode->add_option("--model", dm, "checkpoint (must match the encoder's)")->required();
  decode->add_option("--in", din, "input bitstream")->required();
  decode->add_option("--out", dout, "output image")->required();

  std::string eo, er, eb;
  CLI::App* eval = app.add_subcommand("eval", "print bpp,psnr_db for files or directories");
  eval->add_option("--orig", eo, "original image or directory")->required();
  eval->add_option("--recon", er, "reconstruction image or directory")->required();
  eval->add_option("--bin", eb, "bitstream file or directory")->required();

  std::vector<std::string> rc_models;
  std::string rc_data, rc_out;
  CLI::App* rd = app.add_subcommand("rd-curve", "encode+decode a corpus under several models");
  rd->add_option("--models", rc_models, "checkpoint paths")->required()->expected(-1);
  rd->add_option("--data", rc_data, "directory of images")->required();
  rd->add_option("--out", rc_out, "output CSV")->required();

  std::vector<const char*> argv;
  argv.push_back("svae");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(ta);
    if (encode->parsed()) return cmd_encode(ea);
    if (decode->parsed()) return cmd_decode(dm, din, dout);
    if (eval->parsed()) return cmd_eval(eo, er, eb);
    if (rd->parsed()) return cmd_rd_curve(rc_models, rc_data, rc_out);
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind == DatasetError::Kind::Empty ? kExitEmptyData : kExitUndersized;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const MismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace svae
