#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "saca/attention.hpp"
#include "saca/class_center.hpp"
#include "saca/dataset.hpp"
#include "saca/metrics.hpp"
#include "saca/relative_position.hpp"
#include "saca/scene_context.hpp"
#include "saca/tensor.hpp"

namespace saca {

// Applied to every trainable tensor on each SGD step, coupled into the
// gradient (g + decay * w), whether or not the tensor joined the graph.
inline constexpr double kWeightDecay = 1e-4;

struct SacaConfig {
  int height = 32;
  int width = 32;
  int c_backbone = 16;  // feature width out of the stub backbone
  int c_attn = 16;      // attention channel width
  int k_classes = 4;
  int patch_h = 8;
  int patch_w = 8;
  int xi = 7;
  int epsilon = 16;
  double aux_loss_weight = 0.4;
  std::uint64_t seed = 1;
  double learning_rate = 0.01;
  int steps = 500;
  // ablation switches; disabled stages are skipped entirely
  bool enable_context_gate = true;
  bool enable_position_bias = true;
  bool context_hidden_relu = true;

  void validate() const;
  static SacaConfig from_json_text(const std::string& text);
  static SacaConfig from_json_file(const std::string& path);
  std::string to_json_text() const;  // single line
};

struct SacaParams {
  Tensor bb1_w, bb1_b;  // [3,3,3,Cb], [Cb]
  Tensor bb2_w, bb2_b;  // [3,3,Cb,Cb], [Cb]
  PreClassifier pre;
  AttentionProjections attn;
  ContextMLP context;
  PositionBucket bucket;
  Tensor head;  // [c_attn + c_backbone, k_classes]

  static SacaParams init(const SacaConfig& cfg);

  // Fixed order; also the record order of the params file.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;

  void set_requires_grad(bool on);
  void zero_grads();
  std::size_t scalar_count() const;
  std::size_t module_scalar_count() const;  // excludes the stub backbone
};

// [H, W, 3] -> [H/4, W/4, Cb]: two stride-2 3x3 convolutions with ReLU.
Tensor stub_backbone(const Tensor& image, const SacaParams& params);

struct ForwardResult {
  Tensor logits_main;  // [H, W, K]
  Tensor logits_aux;   // [H/4, W/4, K] pre-classification logits
};

ForwardResult saca_forward(const Tensor& image, const SacaParams& params, const SacaConfig& cfg);

// Top-left sample of each factor x factor block.
Tensor downsample_labels(const Tensor& labels, int factor);

Tensor saca_loss(const Tensor& logits_main, const Tensor& logits_aux, const Tensor& labels,
                 double aux_weight, int ignore_value = 255);

double poly_lr(double base, int step, int total_steps, double power = 0.9);

struct StepRecord {
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  SegMetrics final_metrics;
  ConfusionMatrix cm{1};
};

TrainResult train_toy(const SacaConfig& cfg, const std::vector<ToySample>& dataset,
                      SacaParams* trained = nullptr);

std::string trace_to_json(const TrainResult& result, const SacaConfig& cfg);

// Params file: one config JSON line, then one STF record per named tensor in
// named_tensors() order.
void save_params(const std::string& path, const SacaConfig& cfg, const SacaParams& params);

struct LoadedParams {
  SacaConfig config;
  SacaParams params;
};

LoadedParams load_params(const std::string& path);

}  // namespace saca
