// Copyright 2026 The pyrseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pyrseg/boundary_fusion.hpp"
#include "pyrseg/config.hpp"
#include "pyrseg/error.hpp"
#include "pyrseg/formats.hpp"
#include "pyrseg/metrics.hpp"
#include "pyrseg/model.hpp"
#include "pyrseg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pyrseg;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

json scores_json(const metrics::ClassScores& s) {
  json per = json::object();
  for (std::size_t k = 0; k < s.per_class.size(); ++k)
    per[std::to_string(k)] = s.per_class[k] ? json(*s.per_class[k]) : json(nullptr);
  return per;
}

std::string scores_csv(const metrics::ClassScores& s) {
  std::string out = "class,value\n";
  char buf[64];
  for (std::size_t k = 0; k < s.per_class.size(); ++k) {
    if (!s.per_class[k]) continue;
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k, *s.per_class[k]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%.17g\n", s.mean);
  return out + buf;
}

// --- gen-data -------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t count = 16;
  std::size_t size = 64;
  std::size_t classes = 4;
};

int cmd_gen_data(const GenArgs& a) {
  const auto samples = data::generate_synthetic(a.seed, a.count, a.size, a.classes);
  data::save_dataset(a.out, samples, {a.classes, a.size, a.count, a.seed});
  std::cout << "wrote " << samples.size() << " samples to " << a.out << "\n";
  return 0;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const auto cfg = load_config(a.config);
  const auto ds = data::load_dataset(a.data);
  if (ds.info.classes != cfg.classes) {
    throw ValidationError("dataset has " + std::to_string(ds.info.classes) + " classes, config field 'classes' is " +
                          std::to_string(cfg.classes));
  }
  if (ds.samples.empty()) throw ValidationError("dataset " + a.data + " has no samples");
  model::JointModel model(cfg);
  train::TrainOptions opt;
  opt.out_dir = a.out;
  if (!a.quiet) {
    opt.on_iteration = [](const train::IterationRecord& r) {
      std::printf("iter %zu epoch %zu lr %.6g loss %.6g (mask %.6g duality %.6g edge %.6g)\n", r.iter, r.epoch, r.lr,
                  r.loss.total, r.loss.mask, r.loss.duality, r.loss.edge);
      std::fflush(stdout);
    };
  }
  const auto result = train::train(model, ds.samples, opt);
  std::cout << "trained " << result.history.size() << " iterations; checkpoint at "
            << (fs::path(a.out) / "checkpoint").string() << "\n";
  return 0;
}

// --- infer / derive-boundary ----------------------------------------------

struct InputImages {
  std::vector<std::string> ids;
  std::vector<Tensor> images;
};

// A dataset directory (manifest.json) or a single PPM image.
InputImages load_inputs(const fs::path& input) {
  InputImages in;
  if (fs::is_directory(input)) {
    for (const auto& e : data::read_manifest(input)) {
      if (e.image.empty()) throw ValidationError("manifest entry '" + e.id + "' has no image");
      in.ids.push_back(e.id);
      in.images.push_back(data::read_ppm(input / e.image));
    }
  } else {
    if (!fs::exists(input)) throw IoError("input " + input.string() + " not found");
    in.ids.push_back(input.stem().string());
    in.images.push_back(data::read_ppm(input));
  }
  return in;
}

std::vector<std::string> write_maps(const fs::path& dir, const std::string& stem, const std::vector<ProbMap>& maps) {
  std::vector<std::string> files;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    files.push_back(stem + "_" + std::to_string(k) + ".pgm");
    data::write_prob_map(dir / files.back(), maps[k]);
  }
  return files;
}

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
  bool flip = false;
  bool dump_gradient = false;
};

int cmd_infer(const InferArgs& a) {
  auto model = model::JointModel::load(a.checkpoint);
  const auto in = load_inputs(a.input);
  ensure_dir(a.out);
  const auto preds = train::predict(model, in.images, a.flip);
  std::vector<data::ManifestEntry> entries;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& id = in.ids[i];
    data::ManifestEntry e;
    e.id = id;
    e.mask = id + "_mask.pgm";
    data::write_label_mask(fs::path(a.out) / e.mask, preds[i].mask);
    e.boundary_maps = write_maps(a.out, id + "_boundary", preds[i].boundary);
    if (a.dump_gradient) e.gradient_maps = write_maps(a.out, id + "_gradient", preds[i].gradient);
    entries.push_back(std::move(e));
  }
  const auto& cfg = model.config();
  data::write_manifest(a.out, std::move(entries));
  data::write_dataset_info(a.out, {cfg.classes, in.images.front().dim(1), preds.size(), std::nullopt});
  std::cout << "wrote predictions for " << preds.size() << " image(s) to " << a.out << "\n";
  return 0;
}

struct DeriveArgs {
  std::string checkpoint;
  std::string input;
  std::string mask;
  std::size_t classes = 0;
  std::size_t k = 3;
  std::string out;
};

// One-hot [1,K,H,W] tensor of a label mask; ignore pixels are all-zero.
Tensor one_hot(const data::LabelMask& m, std::size_t classes) {
  const std::size_t hw = m.height * m.width;
  std::vector<double> v(classes * hw, 0.0);
  for (std::size_t i = 0; i < hw; ++i)
    if (m.data[i] != data::kIgnoreLabel) v[m.data[i] * hw + i] = 1.0;
  return Tensor({1, classes, m.height, m.width}, std::move(v));
}

int cmd_derive_boundary(const DeriveArgs& a) {
  ensure_dir(a.out);
  std::vector<data::ManifestEntry> entries;
  std::size_t classes = 0, size = 0;
  if (!a.mask.empty()) {
    if (!a.checkpoint.empty()) throw InvalidArgument("derive-boundary: use either --mask or --checkpoint, not both");
    if (a.classes < 2) throw InvalidArgument("derive-boundary: --mask requires --classes >= 2");
    const auto mask = data::read_label_mask(a.mask, a.classes);
    const Tensor g = model::spatial_gradient(one_hot(mask, a.classes), a.k);
    std::vector<ProbMap> maps;
    const std::size_t hw = mask.height * mask.width;
    for (std::size_t c = 0; c < a.classes; ++c) {
      ProbMap pm(mask.height, mask.width);
      std::copy_n(g.values().begin() + static_cast<std::ptrdiff_t>(c * hw), hw, pm.data.begin());
      maps.push_back(std::move(pm));
    }
    const auto id = fs::path(a.mask).stem().string();
    data::ManifestEntry e;
    e.id = id;
    e.gradient_maps = write_maps(a.out, id + "_gradient", maps);
    entries.push_back(std::move(e));
    classes = a.classes;
    size = mask.height;
  } else {
    if (a.checkpoint.empty() || a.input.empty()) {
      throw InvalidArgument("derive-boundary: give --mask FILE --classes K, or --checkpoint DIR --input PATH");
    }
    auto model = model::JointModel::load(a.checkpoint);
    const auto in = load_inputs(a.input);
    const auto preds = train::predict(model, in.images, false);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      data::ManifestEntry e;
      e.id = in.ids[i];
      e.gradient_maps = write_maps(a.out, in.ids[i] + "_gradient", preds[i].gradient);
      entries.push_back(std::move(e));
    }
    classes = model.config().classes;
    size = in.images.front().dim(1);
  }
  const std::size_t n = entries.size();
  data::write_manifest(a.out, std::move(entries));
  data::write_dataset_info(a.out, {classes, size, n, std::nullopt});
  std::cout << "wrote spatial gradient maps for " << n << " input(s) to " << a.out << "\n";
  return 0;
}

// --- eval -----------------------------------------------------------------

// Pairs up pred and gt entries by id; any id present on one side only is an error.
std::vector<std::pair<data::ManifestEntry, data::ManifestEntry>> pair_entries(const fs::path& pred_dir,
                                                                              const fs::path& gt_dir) {
  const auto pred = data::read_manifest(pred_dir);
  const auto gt = data::read_manifest(gt_dir);
  std::map<std::string, const data::ManifestEntry*> by_id;
  for (const auto& e : pred) by_id[e.id] = &e;
  std::vector<std::string> missing_pred, missing_gt;
  std::vector<std::pair<data::ManifestEntry, data::ManifestEntry>> out;
  for (const auto& g : gt) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) {
      missing_pred.push_back(g.id);
      continue;
    }
    out.emplace_back(*it->second, g);
    by_id.erase(it);
  }
  for (const auto& [id, e] : by_id) missing_gt.push_back(id);
  if (!missing_pred.empty() || !missing_gt.empty()) {
    std::string msg = "pred/gt manifest mismatch;";
    auto list = [](const std::vector<std::string>& ids) {
      std::string s;
      for (const auto& id : ids) s += (s.empty() ? " " : ", ") + id;
      return s;
    };
    if (!missing_pred.empty()) msg += " missing from pred:" + list(missing_pred) + ";";
    if (!missing_gt.empty()) msg += " missing from gt:" + list(missing_gt) + ";";
    throw ValidationError(msg);
  }
  if (out.empty()) throw ValidationError("no samples to evaluate");
  return out;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string out;
  bool nms = false;
  std::optional<double> tolerance;
};

int cmd_eval_seg(const EvalArgs& a) {
  const auto info = data::read_dataset_info(a.gt);
  const auto pairs = pair_entries(a.pred, a.gt);
  std::vector<data::LabelMask> gt, pred;
  for (const auto& [p, g] : pairs) {
    if (p.mask.empty() || g.mask.empty()) throw ValidationError("entry '" + g.id + "' lacks a mask");
    gt.push_back(data::read_label_mask(fs::path(a.gt) / g.mask, info.classes));
    pred.push_back(data::read_label_mask(fs::path(a.pred) / p.mask, info.classes));
    if (gt.back().height != pred.back().height || gt.back().width != pred.back().width) {
      throw ValidationError("entry '" + g.id + "': pred and gt mask sizes differ");
    }
  }
  const auto cm = metrics::evaluate_segmentation(gt, pred, info.classes);
  const auto scores = metrics::miou(cm);
  const json summary{{"miou", scores.mean}, {"per_class", {{"iou", scores_json(scores)}}}, {"images", pairs.size()}};
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(fs::path(a.out) / "miou.csv", scores_csv(scores));
    write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

std::vector<BinaryMap> read_gt_boundaries(const fs::path& dir, const data::ManifestEntry& e) {
  if (!e.boundary.empty()) return train::gt_maps(data::read_boundaries(dir / e.boundary));
  if (e.boundary_maps.empty()) throw ValidationError("gt entry '" + e.id + "' has no boundary labels");
  std::vector<BinaryMap> out;
  for (const auto& pm : data::read_prob_maps(dir, e.boundary_maps)) {
    BinaryMap b(pm.height, pm.width);
    for (std::size_t i = 0; i < pm.data.size(); ++i) b.data[i] = pm.data[i] >= 0.5 ? 1 : 0;
    out.push_back(std::move(b));
  }
  return out;
}

int cmd_eval_bsd(const EvalArgs& a) {
  const auto pairs = pair_entries(a.pred, a.gt);
  metrics::BoundaryEvalOptions opt;
  opt.nms = a.nms;
  if (a.tolerance) {
    if (*a.tolerance < 0) throw InvalidArgument("--tolerance must be >= 0");
    opt.tolerance.fraction = *a.tolerance;
  }
  std::vector<std::vector<ProbMap>> pred;
  std::vector<std::vector<BinaryMap>> gt;
  for (const auto& [p, g] : pairs) {
    if (p.boundary_maps.empty()) throw ValidationError("pred entry '" + p.id + "' has no boundary maps");
    pred.push_back(data::read_prob_maps(a.pred, p.boundary_maps));
    gt.push_back(read_gt_boundaries(a.gt, g));
    if (pred.back().size() != gt.back().size()) {
      throw ValidationError("entry '" + g.id + "': " + std::to_string(pred.back().size()) + " predicted classes vs " +
                            std::to_string(gt.back().size()) + " gt classes");
    }
  }
  const auto acc = metrics::evaluate_boundaries(pred, gt, opt);
  const auto mf = metrics::mf_ods(acc);
  const auto ap = metrics::average_precision(acc);
  const json summary{{"mf_ods", mf.mean},
                     {"ap", ap.mean},
                     {"per_class", {{"mf_ods", scores_json(mf)}, {"ap", scores_json(ap)}}},
                     {"images", pairs.size()},
                     {"nms", a.nms},
                     {"tolerance_fraction", opt.tolerance.fraction}};
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(fs::path(a.out) / "mf_ods.csv", scores_csv(mf));
    write_text(fs::path(a.out) / "ap.csv", scores_csv(ap));
    std::string curve = "class,threshold,precision,recall\n";
    char buf[128];
    for (std::size_t k = 0; k < acc.classes(); ++k) {
      for (const auto& pt : metrics::pr_curve(acc, k)) {
        std::snprintf(buf, sizeof buf, "%zu,%.2f,%.17g,%.17g\n", k, pt.threshold, pt.precision, pt.recall);
        curve += buf;
      }
    }
    write_text(fs::path(a.out) / "pr_curve.csv", curve);
    write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_config(const std::string& action, const std::string& file) {
  if (action == "schema") {
    std::cout << config_schema().dump(2) << "\n";
  } else {
    const ModelConfig cfg = file.empty() ? ModelConfig{} : load_config(file);
    std::cout << to_json(cfg).dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pyrseg: joint segmentation and semantic boundary network"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--count", gen.count, "Number of samples");
  gen_cmd->add_option("--size", gen.size, "Image height and width (multiple of 16)");
  gen_cmd->add_option("--classes", gen.classes, "Number of classes K");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", tr.config, "Config JSON")->required();
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Output directory (loss.csv, checkpoint/)")->required();
  train_cmd->add_flag("--quiet", tr.quiet, "Do not print per-iteration losses");

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "Predict masks and boundary maps");
  infer_cmd->add_option("--checkpoint", inf.checkpoint, "Checkpoint directory")->required();
  infer_cmd->add_option("--input", inf.input, "PPM image or dataset directory")->required();
  infer_cmd->add_option("--out", inf.out, "Output directory")->required();
  infer_cmd->add_flag("--flip", inf.flip, "Average with the mirrored prediction");
  infer_cmd->add_flag("--dump-gradient", inf.dump_gradient, "Also write spatial gradient maps");

  DeriveArgs der;
  auto* derive_cmd = app.add_subcommand("derive-boundary", "Write spatial gradient maps of a mask");
  derive_cmd->add_option("--mask", der.mask, "Label mask PGM (one-hot mask input)");
  derive_cmd->add_option("--classes", der.classes, "Number of classes for --mask");
  derive_cmd->add_option("--k", der.k, "Pooling window (odd)");
  derive_cmd->add_option("--checkpoint", der.checkpoint, "Checkpoint directory (model mask input)");
  derive_cmd->add_option("--input", der.input, "PPM image or dataset directory for --checkpoint");
  derive_cmd->add_option("--out", der.out, "Output directory")->required();

  EvalArgs seg;
  auto* seg_cmd = app.add_subcommand("eval-seg", "Mean IoU of predicted masks");
  seg_cmd->add_option("--pred", seg.pred, "Prediction directory")->required();
  seg_cmd->add_option("--gt", seg.gt, "Ground-truth dataset directory")->required();
  seg_cmd->add_option("--out", seg.out, "Directory for CSV/JSON reports");

  EvalArgs bsd;
  double tolerance = 0.0;
  auto* bsd_cmd = app.add_subcommand("eval-bsd", "MF(ODS) and AP of predicted boundary maps");
  bsd_cmd->add_option("--pred", bsd.pred, "Prediction directory")->required();
  bsd_cmd->add_option("--gt", bsd.gt, "Ground-truth dataset directory")->required();
  bsd_cmd->add_option("--out", bsd.out, "Directory for CSV/JSON reports");
  bsd_cmd->add_flag("--nms", bsd.nms, "Thin predictions with non-maximum suppression");
  auto* tol_opt = bsd_cmd->add_option("--tolerance", tolerance, "Match radius as a fraction of the image diagonal");

  std::string cfg_action = "print", cfg_file;
  auto* cfg_cmd = app.add_subcommand("config", "Print the effective config or its JSON schema");
  cfg_cmd->add_option("action", cfg_action, "print | schema")->check(CLI::IsMember({"print", "schema"}));
  cfg_cmd->add_option("--config", cfg_file, "Config JSON to validate and print");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*infer_cmd) return cmd_infer(inf);
    if (*derive_cmd) return cmd_derive_boundary(der);
    if (*seg_cmd) return cmd_eval_seg(seg);
    if (*bsd_cmd) {
      if (*tol_opt) bsd.tolerance = tolerance;
      return cmd_eval_bsd(bsd);
    }
    if (*cfg_cmd) return cmd_config(cfg_action, cfg_file);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
