// resseg: train, predict, evaluate, info and synth subcommands.

#include <CLI11.hpp>

#include <cstdio>
#include <malloc.h>
#include <iostream>
#include <string>
#include <vector>

#include "resseg/commands.hpp"

namespace {

using namespace resseg;

int exit_code(const std::string& category) {
  if (category == "config") return 2;
  if (category == "io") return 3;
  if (category == "data") return 4;
  if (category == "shape") return 5;
  if (category == "numeric") return 6;
  return 1;
}

/// First line is `error: <category>: <message>`; multi-line detail (shape
/// listings) follows on later lines.
int report(const std::string& category, const std::string& what) {
  const auto nl = what.find('\n');
  std::cerr << "error: " << category << ": " << what.substr(0, nl) << "\n";
  if (nl != std::string::npos) std::cerr << what.substr(nl + 1);
  return exit_code(category);
}

RunConfig resolve(const std::string& config_path, const std::vector<std::string>& overrides,
                  const std::string& seed, bool tta) {
  KeyValues kv;
  if (!config_path.empty()) kv = parse_key_values(read_text_file(config_path));
  for (const auto& o : overrides) {
    for (auto& p : parse_key_values(o)) kv.push_back(std::move(p));
  }
  if (!seed.empty()) kv.emplace_back("seed", seed);
  if (tta) kv.emplace_back("tta", "true");
  RunConfig cfg;
  cfg.apply_all(kv);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  // Activation buffers are tens of MB; keep them on the heap instead of
  // mmapping and faulting them in again on every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"Residual-attention U-Net segmentation toolkit"};
  app.require_subcommand(1);

  std::string config, data, out, seed, checkpoint, pred, gt;
  std::vector<std::string> overrides;
  bool tta = false;
  int n_train = 16, n_val = 4, size = 224;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "key=value run config file");
    sub->add_option("--set", overrides, "extra key=value override (repeatable)");
    sub->add_option("--seed", seed, "RNG seed (u64)");
  };

  auto* train = app.add_subcommand("train", "train a model on data/{train,validation}");
  add_common(train);
  train->add_option("--data", data, "dataset root")->required();
  train->add_option("--out", out, "output directory")->required();

  auto* predict = app.add_subcommand("predict", "write binary masks for every PNG in a directory");
  add_common(predict);
  predict->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  predict->add_option("--data", data, "directory of input PNGs")->required();
  predict->add_option("--out", out, "output directory")->required();
  predict->add_flag("--tta", tta, "8-way dihedral test-time augmentation with majority vote");

  auto* evaluate = app.add_subcommand("evaluate", "score predicted masks against ground truth");
  evaluate->add_option("--pred", pred, "predicted masks")->required();
  evaluate->add_option("--gt", gt, "ground-truth masks")->required();
  evaluate->add_option("--out", out, "also write metrics.txt here");

  auto* info = app.add_subcommand("info", "parameter / FLOP accounting");
  add_common(info);

  auto* synth = app.add_subcommand("synth", "generate a synthetic ellipse corpus");
  synth->add_option("--out", out, "dataset root")->required();
  synth->add_option("--n", n_train, "training images")->check(CLI::PositiveNumber);
  synth->add_option("--val", n_val, "validation images")->check(CLI::NonNegativeNumber);
  synth->add_option("--size", size, "image side")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "RNG seed (u64)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("config", e.what());
  }

  try {
    if (*train) {
      const RunConfig cfg = resolve(config, overrides, seed, false);
      const TrainResult r = cmd_train(cfg, data, out, &std::cout);
      std::printf("best_epoch=%d\nbest_dsc=%.6f\ncheckpoint=%s\n", r.best_epoch, r.best_dsc,
                  r.checkpoint.string().c_str());
    } else if (*predict) {
      PredictOptions opt;
      if (!config.empty() || !overrides.empty()) {
        const RunConfig cfg = resolve(config, overrides, seed, tta);
        opt.model = cfg.model;
        opt.threshold = cfg.threshold;
        opt.patch_size = cfg.patch_size;
        opt.tta = cfg.tta;
      }
      opt.tta = opt.tta || tta;
      const int n = cmd_predict(checkpoint, data, out, opt);
      std::printf("masks=%d\n", n);
    } else if (*evaluate) {
      const EvaluationReport r = cmd_evaluate(pred, gt);
      const std::string text = r.to_text();
      std::fputs(text.c_str(), stdout);
      if (!out.empty()) {
        std::filesystem::create_directories(out);
        write_text_file(std::filesystem::path(out) / "metrics.txt", text);
      }
    } else if (*info) {
      const RunConfig cfg = resolve(config, overrides, seed, false);
      std::fputs(cmd_info(cfg.model).c_str(), stdout);
    } else if (*synth) {
      std::uint64_t s = 0;
      if (!seed.empty()) s = resolve("", {}, seed, false).seed;
      cmd_synth(out, SynthLayout{n_train, n_val, size, size}, s);
      write_text_file(std::filesystem::path(out) / "synth.cfg",
                      format_key_values({{"train", std::to_string(n_train)},
                                         {"validation", std::to_string(n_val)},
                                         {"size", std::to_string(size)},
                                         {"seed", std::to_string(s)}}));
      std::printf("train=%d\nvalidation=%d\n", n_train, n_val);
    }
  } catch (const Error& e) {
    return report(e.category(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report("io", e.what());
  } catch (const std::exception& e) {
    return report("internal", e.what());
  }
  return 0;
}
