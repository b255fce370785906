#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "resseg/metrics.hpp"
#include "resseg/model.hpp"
#include "resseg/run_config.hpp"
#include "resseg/synth.hpp"

namespace resseg {

namespace fs = std::filesystem;

/// Sorted *.png file names (not paths) in `dir`.
std::vector<std::string> list_pngs(const fs::path& dir);

/// Loads dir/images/X.png with dir/labels/X.png for every X. Unpaired files
/// are a DataError listing them.
std::vector<Sample> load_split(const fs::path& split_dir);

struct EpochRecord {
  int epoch = 0;
  double seg_loss = 0;
  double dsc = 0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_dsc = -1;
  fs::path checkpoint;
};

/// Trains on 224x224 patches of data/train, scores patch-level DSC on
/// data/validation after every epoch and keeps the best checkpoint in
/// out/best.rseg (plus out/last.rseg). Writes out/train_log.csv and
/// out/run.cfg. Throws NumericError naming epoch and step on a non-finite
/// loss.
TrainResult cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                      std::ostream* progress = nullptr);

/// Patch-level micro DSC of `model` over `samples`.
double patch_dsc(Model<float>& model, const std::vector<Sample>& samples, double threshold, int patch_size);

struct PredictOptions {
  bool tta = false;
  double threshold = 0.5;
  int patch_size = 224;
  /// When set, the checkpoint must match this architecture.
  std::optional<ModelConfig> model;
};

/// Writes one 0/255 mask PNG per input PNG under out_dir, same name and
/// extent. Returns the number of masks written.
int cmd_predict(const fs::path& checkpoint, const fs::path& image_dir, const fs::path& out_dir,
                const PredictOptions& options);

struct EvaluationReport {
  std::size_t images = 0;
  std::size_t patches = 0;
  MetricsReport image_micro;
  MetricsReport image_macro;
  MetricsReport patch_micro;
  MetricsReport patch_macro;

  std::string to_text() const;
};

/// Pixel metrics of binary masks in pred_dir against same-named masks in
/// gt_dir: micro (pooled counts) and macro (mean of per-unit scores), per
/// image and per 224x224 tile. Tiles are scored on their in-image region.
EvaluationReport cmd_evaluate(const fs::path& pred_dir, const fs::path& gt_dir, int patch_size = 224);

/// Parameter count, GFLOPs at 224x224 and per-layer table.
std::string cmd_info(const ModelConfig& cfg);

void cmd_synth(const fs::path& out_dir, const SynthLayout& layout, std::uint64_t seed);

}  // namespace resseg
