#include "saca/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "saca/errors.hpp"
#include "saca/ops.hpp"
#include "saca/rng.hpp"
#include "saca/stf.hpp"
#include "saca/tape.hpp"

namespace saca {

using nlohmann::json;

void SacaConfig::validate() const {
  if (height < 4 || width < 4 || height % 4 != 0 || width % 4 != 0) {
    throw ValueError("config: height and width must be positive multiples of 4");
  }
  if (c_backbone < 1 || c_attn < 1 || k_classes < 1) {
    throw ValueError("config: channel and class counts must be >= 1");
  }
  if (patch_h < 1 || patch_w < 1) throw ValueError("config: patch size must be >= 1");
  if (xi < 0) throw ValueError("config: xi must be >= 0");
  if (epsilon < 1 || c_attn % epsilon != 0) {
    throw ValueError("config: epsilon must be >= 1 and divide c_attn");
  }
  if (aux_loss_weight < 0.0) throw ValueError("config: negative aux_loss_weight");
  if (learning_rate <= 0.0) throw ValueError("config: learning_rate must be positive");
  if (steps < 1) throw ValueError("config: steps must be >= 1");
}

SacaConfig SacaConfig::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw IoError("config: malformed JSON");
  if (!j.is_object()) throw ValueError("config: top level must be an object");
  SacaConfig cfg;
  auto get_int = [&](const char* key, int& slot) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) throw ValueError(std::string("config: ") + key + " must be an integer");
    slot = j[key].get<int>();
  };
  auto get_double = [&](const char* key, double& slot) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ValueError(std::string("config: ") + key + " must be a number");
    slot = j[key].get<double>();
  };
  auto get_bool = [&](const char* key, bool& slot) {
    if (!j.contains(key)) return;
    if (!j[key].is_boolean()) throw ValueError(std::string("config: ") + key + " must be a boolean");
    slot = j[key].get<bool>();
  };
  get_int("height", cfg.height);
  get_int("width", cfg.width);
  get_int("c_backbone", cfg.c_backbone);
  get_int("c_attn", cfg.c_attn);
  get_int("k_classes", cfg.k_classes);
  get_int("patch_h", cfg.patch_h);
  get_int("patch_w", cfg.patch_w);
  get_int("xi", cfg.xi);
  get_int("epsilon", cfg.epsilon);
  get_double("aux_loss_weight", cfg.aux_loss_weight);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
      throw ValueError("config: seed must be an integer");
    }
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  get_double("learning_rate", cfg.learning_rate);
  get_int("steps", cfg.steps);
  get_bool("enable_context_gate", cfg.enable_context_gate);
  get_bool("enable_position_bias", cfg.enable_position_bias);
  get_bool("context_hidden_relu", cfg.context_hidden_relu);

  static const char* known[] = {"height", "width", "c_backbone", "c_attn", "k_classes",
                                "patch_h", "patch_w", "xi", "epsilon", "aux_loss_weight",
                                "seed", "learning_rate", "steps", "enable_context_gate",
                                "enable_position_bias", "context_hidden_relu"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ValueError("config: unknown key \"" + it.key() + "\"");
  }
  cfg.validate();
  return cfg;
}

SacaConfig SacaConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string SacaConfig::to_json_text() const {
  json j;
  j["height"] = height;
  j["width"] = width;
  j["c_backbone"] = c_backbone;
  j["c_attn"] = c_attn;
  j["k_classes"] = k_classes;
  j["patch_h"] = patch_h;
  j["patch_w"] = patch_w;
  j["xi"] = xi;
  j["epsilon"] = epsilon;
  j["aux_loss_weight"] = aux_loss_weight;
  j["seed"] = seed;
  j["learning_rate"] = learning_rate;
  j["steps"] = steps;
  j["enable_context_gate"] = enable_context_gate;
  j["enable_position_bias"] = enable_position_bias;
  j["context_hidden_relu"] = context_hidden_relu;
  return j.dump();
}

SacaParams SacaParams::init(const SacaConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int cb = cfg.c_backbone, c = cfg.c_attn, k = cfg.k_classes;
  SacaParams p;
  const double bb1 = 1.0 / std::sqrt(27.0);
  const double bb2 = 1.0 / std::sqrt(9.0 * cb);
  p.bb1_w = Tensor::uniform({3, 3, 3, cb}, -bb1, bb1, rng);
  p.bb1_b = Tensor::zeros({cb});
  p.bb2_w = Tensor::uniform({3, 3, cb, cb}, -bb2, bb2, rng);
  p.bb2_b = Tensor::zeros({cb});
  p.pre = PreClassifier::init(cb, k, rng);
  p.attn = AttentionProjections::init(cb, c, rng);
  p.context = ContextMLP::init(c, cfg.epsilon, rng, cfg.context_hidden_relu);
  p.bucket = PositionBucket::zeros(cfg.xi, c);
  const double bh = 1.0 / std::sqrt(static_cast<double>(c + cb));
  p.head = Tensor::uniform({c + cb, k}, -bh, bh, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> SacaParams::named_tensors() {
  return {
      {"backbone.conv1.weight", &bb1_w}, {"backbone.conv1.bias", &bb1_b},
      {"backbone.conv2.weight", &bb2_w}, {"backbone.conv2.bias", &bb2_b},
      {"pre_classifier.conv1", &pre.conv1}, {"pre_classifier.conv2", &pre.conv2},
      {"attention.wq", &attn.wq}, {"attention.wk", &attn.wk}, {"attention.wv", &attn.wv},
      {"context.w0", &context.w0}, {"context.w1", &context.w1},
      {"position.bucket", &bucket.p},
      {"head.weight", &head},
  };
}

std::vector<std::pair<std::string, const Tensor*>> SacaParams::named_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<SacaParams*>(this)->named_tensors()) out.emplace_back(name, t);
  return out;
}

void SacaParams::set_requires_grad(bool on) {
  for (auto& [name, t] : named_tensors()) t->set_requires_grad(on);
}

void SacaParams::zero_grads() {
  for (auto& [name, t] : named_tensors()) {
    if (t->requires_grad()) t->zero_grad();
  }
}

std::size_t SacaParams::scalar_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_tensors()) n += t->size();
  return n;
}

std::size_t SacaParams::module_scalar_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_tensors()) {
    if (name.rfind("backbone.", 0) == 0) continue;
    n += t->size();
  }
  return n;
}

Tensor stub_backbone(const Tensor& image, const SacaParams& params) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("stub_backbone: rank-3 [H,W,3] image required, shape is " +
                         shape_str(image.shape()));
  }
  if (image.dim(0) % 4 != 0 || image.dim(1) % 4 != 0) {
    throw DimensionError("stub_backbone: image extent " + shape_str(image.shape()) +
                         " must be divisible by 4");
  }
  Tensor h1 = relu(conv2d(image, params.bb1_w, params.bb1_b, 2, 1));
  return relu(conv2d(h1, params.bb2_w, params.bb2_b, 2, 1));
}

ForwardResult saca_forward(const Tensor& image, const SacaParams& params, const SacaConfig& cfg) {
  if (image.rank() != 3 || image.dim(0) != cfg.height || image.dim(1) != cfg.width ||
      image.dim(2) != 3) {
    throw DimensionError("saca_forward: image " + shape_str(image.shape()) +
                         " does not match configured extent");
  }
  Tensor r = stub_backbone(image, params);
  const int fh = r.dim(0), fw = r.dim(1);

  Tensor d = pre_classify(r, params.pre);
  Tensor s_g = scatter_centers(class_centers(r, d), d);

  const PatchGrid grid = PatchGrid::build(fh, fw, cfg.patch_h, cfg.patch_w);
  Tensor r_l = split_patches(r, grid);
  Tensor d_l = split_patches(d, grid);
  Tensor s_gl = split_patches(s_g, grid);
  Tensor s_l = local_class_centers(r_l, d_l);
  AttentionInputs in = attention_inputs(r_l, s_l, s_gl);

  const int c = cfg.c_attn, h = grid.h, w = grid.w, hw = h * w;
  const std::vector<GridPos> pos = grid_positions(h, w);
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));

  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(grid.patches()));
  for (int t = 0; t < grid.patches(); ++t) {
    Tensor q_map = project(take0(in.xq, t), params.attn.wq);  // [h, w, C]
    Tensor q = reshape(q_map, {hw, c});
    Tensor k = reshape(project(take0(in.xk, t), params.attn.wk), {hw, c});
    Tensor v = reshape(project(take0(in.xv, t), params.attn.wv), {hw, c});

    Tensor gated = cfg.enable_context_gate
                       ? gate_queries(q, context_vector(q_map, params.context))
                       : q;
    Tensor e = matmul(gated, transpose(k));
    if (cfg.enable_position_bias) e = add(e, position_bias(params.bucket, q, pos, pos));
    Tensor alpha = softmax(scale(e, inv_sqrt_c), 1);
    outs.push_back(reshape(aggregate(alpha, v), {1, h, w, c}));
  }
  Tensor r_a = stitch_patches(concat(outs, 0), grid);

  Tensor logits = project(concat({r_a, r}, 2), params.head);
  return {bilinear_upsample(logits, 4), d};
}

Tensor downsample_labels(const Tensor& labels, int factor) {
  if (labels.rank() != 2) {
    throw DimensionError("downsample_labels: rank-2 [H,W] labels required, shape is " +
                         shape_str(labels.shape()));
  }
  if (factor < 1 || labels.dim(0) % factor != 0 || labels.dim(1) % factor != 0) {
    throw DimensionError("downsample_labels: factor " + std::to_string(factor) +
                         " does not divide " + shape_str(labels.shape()));
  }
  const int H = labels.dim(0), W = labels.dim(1);
  const int oh = H / factor, ow = W / factor;
  Tensor out({oh, ow});
  const auto& lv = labels.values();
  auto& ov = out.values();
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      ov[static_cast<std::size_t>(i) * ow + j] =
          lv[static_cast<std::size_t>(i) * factor * W + static_cast<std::size_t>(j) * factor];
    }
  }
  return out;
}

Tensor saca_loss(const Tensor& logits_main, const Tensor& logits_aux, const Tensor& labels,
                 double aux_weight, int ignore_value) {
  if (aux_weight < 0.0) throw ValueError("saca_loss: negative aux weight");
  Tensor main = cross_entropy(logits_main, labels, ignore_value);
  if (aux_weight == 0.0) return main;
  const int factor = labels.dim(0) / logits_aux.dim(0);
  if (factor < 1 || logits_aux.dim(0) * factor != labels.dim(0) ||
      logits_aux.dim(1) * factor != labels.dim(1)) {
    throw DimensionError("saca_loss: aux logits " + shape_str(logits_aux.shape()) +
                         " do not evenly divide labels " + shape_str(labels.shape()));
  }
  Tensor aux = cross_entropy(logits_aux, downsample_labels(labels, factor), ignore_value);
  return add(main, scale(aux, aux_weight));
}

double poly_lr(double base, int step, int total_steps, double power) {
  if (total_steps < 1) throw ValueError("poly_lr: total_steps must be >= 1");
  if (step < 0 || step > total_steps) throw ValueError("poly_lr: step out of range");
  return base * std::pow(1.0 - static_cast<double>(step) / total_steps, power);
}

TrainResult train_toy(const SacaConfig& cfg, const std::vector<ToySample>& dataset,
                      SacaParams* trained) {
  cfg.validate();
  if (dataset.empty()) throw ValueError("train_toy: empty dataset");
  for (const ToySample& s : dataset) {
    if (s.image.rank() != 3 || s.image.dim(0) != cfg.height || s.image.dim(1) != cfg.width ||
        s.image.dim(2) != 3 || s.label.rank() != 2 || s.label.dim(0) != cfg.height ||
        s.label.dim(1) != cfg.width) {
      throw DimensionError("train_toy: sample shapes do not match config");
    }
  }

  SacaParams params = SacaParams::init(cfg);
  params.set_requires_grad(true);

  TrainResult result;
  result.cm = ConfusionMatrix(cfg.k_classes);
  result.steps.reserve(static_cast<std::size_t>(cfg.steps));

  for (int t = 0; t < cfg.steps; ++t) {
    const ToySample& s = dataset[static_cast<std::size_t>(t) % dataset.size()];
    const double lr = poly_lr(cfg.learning_rate, t, cfg.steps);
    params.zero_grads();
    double loss_val;
    {
      GradTape tape;
      GradTape::Scope scope(tape);
      ForwardResult f = saca_forward(s.image, params, cfg);
      Tensor loss = saca_loss(f.logits_main, f.logits_aux, s.label, cfg.aux_loss_weight);
      loss_val = loss.item();
      tape.backward(loss);
    }
    for (auto& [name, w] : params.named_tensors()) {
      auto& wv = w->values();
      const auto& gv = w->grad();
      for (std::size_t i = 0; i < wv.size(); ++i) {
        wv[i] -= lr * (gv[i] + kWeightDecay * wv[i]);
      }
    }
    result.steps.push_back({t, lr, loss_val});
  }

  params.set_requires_grad(false);
  for (const ToySample& s : dataset) {
    ForwardResult f = saca_forward(s.image, params, cfg);
    result.cm.add(argmax_classes(f.logits_main), s.label);
  }
  result.final_metrics = compute_metrics(result.cm);
  if (trained) *trained = params;
  return result;
}

std::string trace_to_json(const TrainResult& result, const SacaConfig& cfg) {
  json j;
  j["config"] = json::parse(cfg.to_json_text());
  json steps = json::array();
  for (const StepRecord& s : result.steps) {
    steps.push_back({{"step", s.step}, {"lr", s.lr}, {"loss", s.loss}});
  }
  j["steps"] = std::move(steps);
  json final;
  final["oa"] = result.final_metrics.oa;
  final["miou"] = result.final_metrics.miou;
  final["af"] = result.final_metrics.af;
  json iou = json::array(), f1 = json::array();
  for (double v : result.final_metrics.class_iou) iou.push_back(std::isnan(v) ? json() : json(v));
  for (double v : result.final_metrics.class_f1) f1.push_back(std::isnan(v) ? json() : json(v));
  final["class_iou"] = std::move(iou);
  final["class_f1"] = std::move(f1);
  j["final"] = std::move(final);
  json cm = json::array();
  for (int r = 0; r < result.cm.k; ++r) {
    json row = json::array();
    for (int c = 0; c < result.cm.k; ++c) row.push_back(result.cm.at(r, c));
    cm.push_back(std::move(row));
  }
  j["confusion"] = std::move(cm);
  return j.dump(2) + "\n";
}

void save_params(const std::string& path, const SacaConfig& cfg, const SacaParams& params) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("save_params: cannot open " + path);
  try {
    const std::string header = cfg.to_json_text() + "\n";
    if (std::fwrite(header.data(), 1, header.size(), f) != header.size()) {
      throw IoError("save_params: header write failed");
    }
    for (auto& [name, t] : params.named_tensors()) write_stf(f, *t);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  if (std::fclose(f) != 0) throw IoError("save_params: close failed for " + path);
}

LoadedParams load_params(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("load_params: cannot open " + path);
  try {
    std::string header;
    for (;;) {
      const int c = std::fgetc(f);
      if (c == EOF) throw IoError("load_params: truncated config line");
      if (c == '\n') break;
      header.push_back(static_cast<char>(c));
      if (header.size() > 1 << 16) throw IoError("load_params: config line too long");
    }
    LoadedParams out{SacaConfig::from_json_text(header), SacaParams{}};
    out.params = SacaParams::init(out.config);
    for (auto& [name, t] : out.params.named_tensors()) {
      Tensor rec = read_stf(f);
      if (rec.shape() != t->shape()) {
        throw IoError("load_params: record for " + name + " has shape " +
                      shape_str(rec.shape()) + ", expected " + shape_str(t->shape()));
      }
      t->values() = rec.values();
    }
    if (std::fgetc(f) != EOF) throw IoError("load_params: trailing data");
    std::fclose(f);
    return out;
  } catch (...) {
    std::fclose(f);
    throw;
  }
}

}  // namespace saca
