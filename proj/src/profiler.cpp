#include "saca/profiler.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"
#include "saca/errors.hpp"

namespace saca {

using nlohmann::json;

namespace {

json conventions_json() {
  json c;
  c["mac_flops"] = 2;
  c["softmax_flops_per_element"] = 4;
  c["pool_flops_per_element"] = 1;
  c["elementwise_flops_per_element"] = 1;
  c["argmax_flops_per_scanned_element"] = 1;
  c["data_movement_flops"] = 0;
  c["activation_bytes_per_value"] = 4;
  c["table_units"] = {{"params", "M = 1e6"}, {"flops", "G = 1e9"}, {"memory", "MB = 2^20 bytes"}};
  c["scope"] =
      "class-center generation and scene-aware attention, pre-classification through prediction "
      "head; stub backbone and upsampling excluded";
  c["peak_model"] = "max over per-stage live activation sets, sequential per-patch execution";
  return c;
}

}  // namespace

ProfileReport profile(const SacaConfig& cfg) {
  cfg.validate();
  using I = std::int64_t;
  const I fh = cfg.height / 4, fw = cfg.width / 4;
  const I n = fh * fw;
  const PatchGrid grid = PatchGrid::build(static_cast<int>(fh), static_cast<int>(fw),
                                          cfg.patch_h, cfg.patch_w);
  const I np = grid.patches();
  const I hw = static_cast<I>(grid.h) * grid.w;
  const I npix = np * hw;
  const I cb = cfg.c_backbone, c = cfg.c_attn, k = cfg.k_classes;
  const I ch = c / cfg.epsilon;
  const I side = 2 * static_cast<I>(cfg.xi) + 1;

  ProfileReport rep;
  rep.patches = np;
  auto stage = [&](std::string name, I params, I flops, I bytes_floats) {
    rep.breakdown.push_back({std::move(name), params, flops, 4 * bytes_floats});
  };

  // 1: two chained per-pixel linear layers with a ReLU between
  stage("pre_classify", cb * cb + cb * k, n * (2 * cb * cb) + n * cb + n * (2 * cb * k),
        n * cb + n * k);
  // 2: spatial softmax per class + weighted feature average
  stage("global_centers", 0, 4 * (n * k) + 2 * k * n * cb, k * n + k * cb);
  // 3: per-pixel argmax scan; placement is data movement
  stage("scatter_global", 0, n * k, n * cb);
  // 4: tiling of features, logits, and the global center map
  stage("split", 0, 0, npix * (cb + k + cb));
  // 5: per-patch centers and scatter
  stage("local_centers", 0, np * (4 * hw * k + 2 * k * hw * cb + hw * k), npix * cb);
  // 6: q/k/v projections over every patch position
  stage("projections", 3 * cb * c, np * 3 * (2 * cb * c * hw), 3 * npix * c);
  // 7: pooling, bottleneck MLP twice, sum, sigmoid, gate application
  stage("query_gate", 2 * c * ch,
        np * (2 * hw * c + 2 * (2 * c * ch + ch + 2 * ch * c) + c + c + hw * c),
        np * (c + hw * c));
  // 8: relative-offset dot products
  stage("position_bias", side * side * c, np * (hw * hw * 2 * c), np * hw * hw);
  // 9: content matmul + bias add + scaling
  stage("affinity", 0, np * (hw * hw * 2 * c + hw * hw + hw * hw), np * hw * hw);
  stage("attention_softmax", 0, np * 4 * hw * hw, np * hw * hw);
  stage("aggregate", 0, np * (hw * hw * 2 * c), npix * c);
  stage("stitch", 0, 0, n * c);
  // 13: concat is movement; head is a per-pixel linear layer
  stage("head", (c + cb) * k, n * 2 * (c + cb) * k, n * (c + cb) + n * k);

  for (const StageCost& s : rep.breakdown) {
    rep.params += s.params;
    rep.flops += s.flops;
  }

  // liveness intervals over stage indices 1..13, in floats
  struct Live {
    I floats;
    int first, last;
  };
  const std::vector<Live> persistent = {
      {n * cb, 1, 13},        // R
      {n * k, 1, 13},         // D (aux output)
      {k * n, 2, 2},          // global assignment
      {k * cb, 2, 3},         // global centers
      {n * cb, 3, 4},         // S_g
      {npix * cb, 4, 11},     // R_l
      {npix * k, 4, 5},       // D_l
      {npix * cb, 4, 11},     // S_g split
      {npix * cb, 5, 11},     // S_l
      {npix * c, 11, 12},     // collected attention outputs
      {n * c, 12, 13},        // R_a
      {n * (c + cb) + n * k, 13, 13},  // concat + logits
  };
  std::vector<I> transient(14, 0);
  transient[5] = hw * k + k * cb;
  transient[6] = 3 * hw * c;
  transient[7] = 3 * hw * c + c + hw * c;
  transient[8] = 4 * hw * c + hw * hw;
  transient[9] = 4 * hw * c + 2 * hw * hw;
  transient[10] = 4 * hw * c + 2 * hw * hw;
  transient[11] = hw * c + hw * hw + hw * c;
  for (int s = 1; s <= 13; ++s) {
    I live = transient[static_cast<std::size_t>(s)];
    for (const Live& p : persistent) {
      if (p.first <= s && s <= p.last) live += p.floats;
    }
    rep.peak_bytes = std::max(rep.peak_bytes, 4 * live);
  }
  return rep;
}

std::int64_t ProfileReport::per_patch_attention_flops() const {
  if (patches < 1) throw ValueError("per_patch_attention_flops: patch count unknown");
  std::int64_t total = 0;
  for (const StageCost& s : breakdown) {
    if (s.stage == "position_bias" || s.stage == "affinity" || s.stage == "attention_softmax" ||
        s.stage == "aggregate") {
      total += s.flops;
    }
  }
  return total / patches;
}

std::string ProfileReport::to_json() const {
  json j;
  j["params"] = params;
  j["flops"] = flops;
  j["peak_bytes"] = peak_bytes;
  json rows = json::array();
  for (const StageCost& s : breakdown) {
    rows.push_back({{"stage", s.stage}, {"params", s.params}, {"flops", s.flops}, {"bytes", s.bytes}});
  }
  j["breakdown"] = std::move(rows);
  j["conventions"] = conventions_json();
  return j.dump(2) + "\n";
}

ProfileReport ProfileReport::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw IoError("profile report: malformed JSON");
  ProfileReport rep;
  try {
    rep.params = j.at("params").get<std::int64_t>();
    rep.flops = j.at("flops").get<std::int64_t>();
    rep.peak_bytes = j.at("peak_bytes").get<std::int64_t>();
    for (const auto& row : j.at("breakdown")) {
      rep.breakdown.push_back({row.at("stage").get<std::string>(),
                               row.at("params").get<std::int64_t>(),
                               row.at("flops").get<std::int64_t>(),
                               row.at("bytes").get<std::int64_t>()});
    }
  } catch (const json::exception&) {
    throw IoError("profile report: missing or mistyped field");
  }
  return rep;
}

std::string ProfileReport::to_table() const {
  auto m = [](std::int64_t v) { return static_cast<double>(v) / 1e6; };
  auto g = [](std::int64_t v) { return static_cast<double>(v) / 1e9; };
  auto mb = [](std::int64_t v) { return static_cast<double>(v) / (1024.0 * 1024.0); };
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %10s %10s %12s\n", "stage", "Params (M)", "FLOPs (G)",
                "Memory (MB)");
  out += line;
  for (const StageCost& s : breakdown) {
    std::snprintf(line, sizeof(line), "%-18s %10.1f %10.1f %12.1f\n", s.stage.c_str(),
                  m(s.params), g(s.flops), mb(s.bytes));
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-18s %10.1f %10.1f %12.1f\n", "total", m(params), g(flops),
                mb(peak_bytes));
  out += line;
  out += "memory column: per-stage activation volume; total row: peak live set\n";
  return out;
}

}  // namespace saca
