#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "saca/dataset.hpp"
#include "saca/errors.hpp"
#include "saca/gradcheck.hpp"
#include "saca/metrics.hpp"
#include "saca/pipeline.hpp"
#include "saca/profiler.hpp"
#include "saca/stf.hpp"

namespace fs = std::filesystem;

namespace {

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw saca::IoError("cannot open " + path);
  out << text;
  if (!out) throw saca::IoError("write failed for " + path);
}

int cmd_train_toy(const std::string& config_path, const std::string& out_path,
                  const std::string& data_dir, const std::string& save_params_path) {
  saca::SacaConfig cfg = saca::SacaConfig::from_json_file(config_path);

  std::vector<saca::ToySample> dataset;
  if (data_dir.empty()) {
    saca::ToyDatasetSpec spec;
    spec.height = cfg.height;
    spec.width = cfg.width;
    spec.k_classes = cfg.k_classes;
    spec.seed = cfg.seed;
    dataset = saca::make_toy_dataset(spec);
  } else {
    // directory of NAME.image.stf / NAME.label.stf pairs
    std::map<std::string, std::pair<std::string, std::string>> pairs;
    if (!fs::is_directory(data_dir)) throw saca::IoError("not a directory: " + data_dir);
    for (const auto& entry : fs::directory_iterator(data_dir)) {
      const std::string name = entry.path().filename().string();
      auto ends_with = [&](const std::string& suffix) {
        return name.size() > suffix.size() &&
               name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
      };
      if (ends_with(".image.stf")) {
        pairs[name.substr(0, name.size() - 10)].first = entry.path().string();
      } else if (ends_with(".label.stf")) {
        pairs[name.substr(0, name.size() - 10)].second = entry.path().string();
      }
    }
    for (const auto& [stem, p] : pairs) {
      if (p.first.empty() || p.second.empty()) {
        throw saca::ValueError("unpaired sample \"" + stem + "\" in " + data_dir);
      }
      dataset.push_back({saca::load_stf(p.first), saca::load_stf(p.second)});
    }
    if (dataset.empty()) throw saca::ValueError("no samples found in " + data_dir);
  }

  saca::SacaParams trained = saca::SacaParams::init(cfg);
  saca::TrainResult result = saca::train_toy(cfg, dataset, &trained);
  write_text_file(out_path, saca::trace_to_json(result, cfg));
  if (!save_params_path.empty()) saca::save_params(save_params_path, cfg, trained);
  std::printf("steps %d  final loss %.6f  OA %.4f  mIoU %.4f  AF %.4f\n",
              static_cast<int>(result.steps.size()),
              result.steps.empty() ? 0.0 : result.steps.back().loss, result.final_metrics.oa,
              result.final_metrics.miou, result.final_metrics.af);
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& report_path) {
  if (!fs::is_directory(pred_dir)) throw saca::IoError("not a directory: " + pred_dir);
  if (!fs::is_directory(gt_dir)) throw saca::IoError("not a directory: " + gt_dir);

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(gt_dir)) {
    if (entry.path().extension() == ".stf") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw saca::ValueError("no .stf label maps in " + gt_dir);

  std::vector<std::pair<saca::Tensor, saca::Tensor>> loaded;
  int k = 0;
  for (const std::string& name : names) {
    const fs::path pred_path = fs::path(pred_dir) / name;
    if (!fs::exists(pred_path)) throw saca::IoError("missing prediction " + pred_path.string());
    saca::Tensor pred = saca::load_stf(pred_path.string());
    saca::Tensor gt = saca::load_stf((fs::path(gt_dir) / name).string());
    for (const saca::Tensor* t : {&pred, &gt}) {
      for (double v : t->values()) {
        const long long iv = std::llround(v);
        if (static_cast<double>(iv) != v) throw saca::ValueError(name + ": non-integer label");
        if (iv != 255 && iv >= k) k = static_cast<int>(iv) + 1;
        if (iv < 0) throw saca::ValueError(name + ": negative label");
      }
    }
    loaded.emplace_back(std::move(pred), std::move(gt));
  }
  if (k == 0) throw saca::ValueError("all pixels carry the ignore value");

  saca::ConfusionMatrix cm(k);
  for (auto& [pred, gt] : loaded) cm.add(pred, gt);
  saca::SegMetrics m = saca::compute_metrics(cm);

  nlohmann::json j;
  j["images"] = names.size();
  j["classes"] = k;
  j["oa"] = m.oa;
  j["miou"] = m.miou;
  j["af"] = m.af;
  nlohmann::json iou = nlohmann::json::array(), f1 = nlohmann::json::array();
  for (double v : m.class_iou) iou.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
  for (double v : m.class_f1) f1.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
  j["class_iou"] = std::move(iou);
  j["class_f1"] = std::move(f1);
  write_text_file(report_path, j.dump(2) + "\n");
  std::printf("images %zu  OA %.4f  mIoU %.4f  AF %.4f\n", names.size(), m.oa, m.miou, m.af);
  return 0;
}

int cmd_gradcheck(const std::string& module) {
  saca::GradCheckSummary sum = saca::run_gradcheck(module, 5);
  for (const saca::GradCheckRecord& r : sum.records) {
    std::printf("%-40s max rel err %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_rel_err,
                r.tolerance, r.pass ? "ok" : "FAIL");
  }
  std::printf("%zu checks, worst %.3e: %s\n", sum.records.size(), sum.worst(),
              sum.all_pass() ? "all passed" : "FAILURES");
  return sum.all_pass() ? 0 : 1;
}

int cmd_forward(const std::string& image_path, const std::string& params_path,
                const std::string& out_path) {
  saca::Tensor image = saca::load_stf(image_path);
  saca::LoadedParams lp = saca::load_params(params_path);
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw saca::DimensionError("image must be [H,W,3], got " + saca::shape_str(image.shape()));
  }
  // the params file fixes the module geometry; the image fixes the extent
  lp.config.height = image.dim(0);
  lp.config.width = image.dim(1);
  lp.config.validate();
  saca::ForwardResult r = saca::saca_forward(image, lp.params, lp.config);
  saca::save_stf(out_path, r.logits_main);
  std::printf("logits %s -> %s\n", saca::shape_str(r.logits_main.shape()).c_str(),
              out_path.c_str());
  return 0;
}

int cmd_profile(const std::string& config_path, const std::string& format) {
  saca::SacaConfig cfg = saca::SacaConfig::from_json_file(config_path);
  saca::ProfileReport rep = saca::profile(cfg);
  std::fputs((format == "table" ? rep.to_table() : rep.to_json()).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scene-aware attention segmentation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, save_params_path;
  auto* train = app.add_subcommand("train-toy", "train on the synthetic dataset");
  train->add_option("--config", config_path, "config JSON")->required();
  train->add_option("--out", out_path, "training trace JSON")->required();
  train->add_option("--data", data_dir, "directory of NAME.image.stf / NAME.label.stf pairs");
  train->add_option("--save-params", save_params_path, "write trained parameters here");

  std::string pred_dir, gt_dir, report_path;
  auto* eval = app.add_subcommand("eval", "score predicted label maps against ground truth");
  eval->add_option("--pred", pred_dir, "directory of predicted .stf label maps")->required();
  eval->add_option("--gt", gt_dir, "directory of ground-truth .stf label maps")->required();
  eval->add_option("--report", report_path, "metrics report JSON")->required();

  std::string module = "all";
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc->add_option("--module", module, "all|attention|context|position|ccg|pipeline")
      ->check(CLI::IsMember({"all", "attention", "context", "position", "ccg", "pipeline"}));

  std::string image_path, params_path, logits_path;
  auto* fwd = app.add_subcommand("forward", "run the model on one image");
  fwd->add_option("--image", image_path, "input image STF [H,W,3]")->required();
  fwd->add_option("--params", params_path, "parameters file from train-toy")->required();
  fwd->add_option("--out", logits_path, "output logits STF")->required();

  std::string profile_config, format = "json";
  auto* prof = app.add_subcommand("profile", "analytic parameter/FLOP/memory counts");
  prof->add_option("--config", profile_config, "config JSON")->required();
  prof->add_option("--format", format, "json|table")->check(CLI::IsMember({"json", "table"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are validation failures
  }

  try {
    if (train->parsed()) return cmd_train_toy(config_path, out_path, data_dir, save_params_path);
    if (eval->parsed()) return cmd_eval(pred_dir, gt_dir, report_path);
    if (gc->parsed()) return cmd_gradcheck(module);
    if (fwd->parsed()) return cmd_forward(image_path, params_path, logits_path);
    if (prof->parsed()) return cmd_profile(profile_config, format);
  } catch (const saca::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return 2;
  } catch (const saca::DimensionError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 1;
  } catch (const saca::ValueError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
