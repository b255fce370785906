#include "resseg/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "resseg/accounting.hpp"
#include "resseg/checkpoint.hpp"
#include "resseg/losses.hpp"
#include "resseg/patches.hpp"
#include "resseg/tta.hpp"

namespace resseg {

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

std::vector<Sample> to_patches(const std::vector<Sample>& samples, int size) {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    PatchSet img = extract_patches(s.image, size);
    PatchSet msk = extract_patches(s.mask, size);
    for (std::size_t i = 0; i < img.patches.size(); ++i)
      out.push_back({std::move(img.patches[i]), std::move(msk.patches[i])});
  }
  return out;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ConfusionCounts region_counts(const Tensor<float>& pred, const Tensor<float>& gt, int y0, int x0, int h, int w) {
  ConfusionCounts c;
  const int W = gt.shape().w;
  const float* p = pred.data();
  const float* g = gt.data();
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      const bool pp = p[i] == 1.0f, gg = g[i] == 1.0f;
      if (pp && gg) ++c.tp;
      else if (pp) ++c.fp;
      else if (gg) ++c.fn;
      else ++c.tn;
    }
  return c;
}

MetricsReport macro_average(const std::vector<MetricsReport>& items) {
  MetricsReport m;
  for (const auto& r : items) {
    m.dsc += r.dsc;
    m.jsi += r.jsi;
    m.se += r.se;
    m.sp += r.sp;
    m.pr += r.pr;
    m.counts += r.counts;
  }
  if (!items.empty()) {
    const double n = static_cast<double>(items.size());
    m.dsc /= n;
    m.jsi /= n;
    m.se /= n;
    m.sp /= n;
    m.pr /= n;
  }
  return m;
}

}  // namespace

std::vector<std::string> list_pngs(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("missing directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<Sample> load_split(const fs::path& split_dir) {
  const auto images = list_pngs(split_dir / "images");
  const auto labels = list_pngs(split_dir / "labels");
  std::vector<std::string> unmatched;
  std::set_symmetric_difference(images.begin(), images.end(), labels.begin(), labels.end(),
                                std::back_inserter(unmatched));
  if (!unmatched.empty()) {
    throw DataError(split_dir.string() + ": files without a counterpart: " + join(unmatched));
  }
  std::vector<Sample> out;
  for (const auto& n : images) out.push_back(load_sample(split_dir / "images" / n, split_dir / "labels" / n));
  return out;
}

double patch_dsc(Model<float>& model, const std::vector<Sample>& samples, double threshold, int patch_size) {
  ConfusionCounts total;
  for (const auto& s : samples) {
    PatchSet img = extract_patches(s.image, patch_size);
    PatchSet msk = extract_patches(s.mask, patch_size);
    const PatchGrid& g = img.grid;
    for (std::size_t i = 0; i < img.patches.size(); ++i) {
      const Tensor<float> pred = binarize(model.predict(img.patches[i]), threshold);
      const auto [oy, ox] = g.origins[i];
      total += region_counts(pred, msk.patches[i], 0, 0, std::min(patch_size, g.height - oy),
                             std::min(patch_size, g.width - ox));
    }
  }
  return MetricsReport::from_counts(total).dsc;
}

TrainResult cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                      std::ostream* progress) {
  cfg.validate();
  const std::vector<Sample> train = load_split(data_dir / "train");
  if (train.empty()) throw DataError("empty training set under " + (data_dir / "train").string());
  std::vector<Sample> validation;
  if (fs::exists(data_dir / "validation")) validation = load_split(data_dir / "validation");
  if (validation.empty()) throw DataError("empty validation set under " + (data_dir / "validation").string());

  fs::create_directories(out_dir);
  write_text_file(out_dir / "run.cfg", cfg.to_text());

  const std::vector<Sample> patches = to_patches(train, cfg.patch_size);
  Model<float> model(cfg.model, cfg.seed);
  LambState<float> opt;
  opt.hyper = cfg.optimizer;
  std::vector<Parameter<float>> params = model.parameters();

  TrainResult result;
  result.checkpoint = out_dir / "best.rseg";
  std::ofstream log(out_dir / "train_log.csv");
  if (!log) throw IoError("cannot write " + (out_dir / "train_log.csv").string());
  log << "epoch,seg_loss,dsc\n";

  if (cfg.epochs == 0) {
    save_checkpoint(result.checkpoint, model, &opt);
    save_checkpoint(out_dir / "last.rseg", model, &opt);
    return result;
  }

  Mt64Uniform order_rng(mix(cfg.seed, 1));
  Mt64Uniform aug_rng(mix(cfg.seed, 2));
  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = std::min(i - 1, static_cast<std::size_t>(order_rng.uniform() * i));
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<Tensor<float>> xs, ys;
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = patches[order[k]];
        if (cfg.augment) {
          Sample a = augment_train(s, aug_rng, cfg.aug);
          xs.push_back(std::move(a.image));
          ys.push_back(std::move(a.mask));
        } else {
          xs.push_back(s.image);
          ys.push_back(s.mask);
        }
      }
      const Tensor<float> x = stack_samples<float>(xs);
      const Tensor<float> y = stack_samples<float>(ys);
      model.zero_grad();
      Var<float> pred = model.forward(Var<float>(x), Mode::Train);
      Var<float> loss = seg_loss(pred, y, cfg.loss);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(steps + 1));
      }
      backward(loss);
      lamb_step<float>(params, opt);
      loss_sum += lv;
      ++steps;
    }
    const double dsc = patch_dsc(model, validation, cfg.threshold, cfg.patch_size);
    const EpochRecord rec{epoch, loss_sum / steps, dsc};
    result.log.push_back(rec);
    char line[128];
    std::snprintf(line, sizeof line, "%d,%.8f,%.6f\n", rec.epoch, rec.seg_loss, rec.dsc);
    log << line << std::flush;
    if (progress) *progress << "epoch " << line << std::flush;
    if (dsc > result.best_dsc) {
      result.best_dsc = dsc;
      result.best_epoch = epoch;
      save_checkpoint(result.checkpoint, model, &opt);
    }
  }
  save_checkpoint(out_dir / "last.rseg", model, &opt);
  return result;
}

int cmd_predict(const fs::path& checkpoint, const fs::path& image_dir, const fs::path& out_dir,
                const PredictOptions& options) {
  Archive archive = read_archive(checkpoint);
  const ArchiveEntry* cfg_entry = archive.find("config");
  if (!cfg_entry) throw IoError(checkpoint.string() + ": missing config entry");
  const ModelConfig stored = ModelConfig::from_text(cfg_entry->text);
  Model<float> model(options.model.value_or(stored));
  restore_model(model, archive);

  const auto names = list_pngs(image_dir);
  fs::create_directories(out_dir);
  KeyValues resolved{{"checkpoint", checkpoint.string()},
                     {"images", image_dir.string()},
                     {"tta", options.tta ? "true" : "false"},
                     {"threshold", std::to_string(options.threshold)},
                     {"patch_size", std::to_string(options.patch_size)}};
  for (auto& p : model.config().to_pairs()) resolved.push_back(std::move(p));
  write_text_file(out_dir / "predict.cfg", format_key_values(resolved));

  const Predictor predictor = [&model](const Tensor<float>& patch) { return model.predict(patch); };
  const auto& group = dihedral_group();
  const DihedralTransform identity{};
  const std::span<const DihedralTransform> transforms =
      options.tta ? std::span<const DihedralTransform>(group) : std::span<const DihedralTransform>(&identity, 1);
  for (const auto& n : names) {
    const Tensor<float> image = load_image(image_dir / n);
    save_mask(out_dir / n, tta_predict(predictor, image, transforms, options.threshold, options.patch_size));
  }
  return static_cast<int>(names.size());
}

std::string EvaluationReport::to_text() const {
  std::string s = "images=" + std::to_string(images) + "\npatches=" + std::to_string(patches) + "\n";
  s += image_micro.to_text("image_micro.");
  s += image_macro.to_text("image_macro.");
  s += patch_micro.to_text("patch_micro.");
  s += patch_macro.to_text("patch_macro.");
  return s;
}

EvaluationReport cmd_evaluate(const fs::path& pred_dir, const fs::path& gt_dir, int patch_size) {
  const auto preds = list_pngs(pred_dir);
  const auto gts = list_pngs(gt_dir);
  std::vector<std::string> unmatched;
  std::set_symmetric_difference(preds.begin(), preds.end(), gts.begin(), gts.end(),
                                std::back_inserter(unmatched));
  if (!unmatched.empty()) throw DataError("unmatched files: " + join(unmatched));
  if (preds.empty()) throw DataError("no masks to evaluate in " + pred_dir.string());

  EvaluationReport r;
  std::vector<MetricsReport> per_image, per_patch;
  ConfusionCounts pooled;
  for (const auto& n : preds) {
    const Tensor<float> p = load_mask(pred_dir / n);
    const Tensor<float> g = load_mask(gt_dir / n);
    if (p.shape() != g.shape()) {
      throw ShapeError(n + ": prediction " + p.shape().str() + " vs ground truth " + g.shape().str());
    }
    const ConfusionCounts c = count_confusion(p, g);
    pooled += c;
    per_image.push_back(MetricsReport::from_counts(c));
    const PatchGrid grid = PatchGrid::make(g.shape().h, g.shape().w, patch_size);
    for (const auto& [oy, ox] : grid.origins) {
      per_patch.push_back(MetricsReport::from_counts(region_counts(
          p, g, oy, ox, std::min(patch_size, grid.height - oy), std::min(patch_size, grid.width - ox))));
    }
  }
  r.images = per_image.size();
  r.patches = per_patch.size();
  r.image_micro = MetricsReport::from_counts(pooled);
  r.image_macro = macro_average(per_image);
  // Tiles partition each image, so pooled tile counts equal pooled image counts.
  r.patch_micro = r.image_micro;
  r.patch_macro = macro_average(per_patch);
  return r;
}

std::string cmd_info(const ModelConfig& cfg) {
  const auto rows = describe_layers(cfg, 224, 224);
  long long params = 0, flops = 0;
  for (const auto& row : rows) {
    params += row.params;
    flops += row.flops();
  }
  char head[160];
  std::snprintf(head, sizeof head, "params=%lld\nparams_m=%.4f\nflops=%lld\ngflops=%.4f\n", params,
                params / 1e6, flops, flops / 1e9);
  return std::string(head) + format_layer_table(rows);
}

void cmd_synth(const fs::path& out_dir, const SynthLayout& layout, std::uint64_t seed) {
  write_synth_corpus(out_dir, layout, seed);
}

}  // namespace resseg
