#include <doctest.h>

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "saca/errors.hpp"
#include "saca/pipeline.hpp"
#include "saca/profiler.hpp"
#include "saca/rng.hpp"

using namespace saca;

namespace {

SacaConfig small_config() {
  SacaConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.c_backbone = 4;
  cfg.c_attn = 4;
  cfg.k_classes = 2;
  cfg.patch_h = 2;
  cfg.patch_w = 2;
  cfg.xi = 1;
  cfg.epsilon = 2;
  return cfg;
}

std::int64_t stage_params(const ProfileReport& rep, const std::string& name) {
  for (const StageCost& s : rep.breakdown)
    if (s.stage == name) return s.params;
  return -1;
}

std::int64_t attention_flops(const ProfileReport& rep) {
  std::int64_t total = 0;
  for (const StageCost& s : rep.breakdown) {
    if (s.stage == "position_bias" || s.stage == "affinity" || s.stage == "attention_softmax" ||
        s.stage == "aggregate") {
      total += s.flops;
    }
  }
  return total;
}

}  // namespace

TEST_SUITE("profiler") {

TEST_CASE("a hand-sized config counts 140 parameters stage by stage") {
  ProfileReport rep = profile(small_config());
  CHECK(stage_params(rep, "pre_classify") == 4 * 4 + 4 * 2);
  CHECK(stage_params(rep, "projections") == 3 * 4 * 4);
  CHECK(stage_params(rep, "query_gate") == 2 * 4 * 2);
  CHECK(stage_params(rep, "position_bias") == 3 * 3 * 4);
  CHECK(stage_params(rep, "head") == (4 + 4) * 2);
  CHECK(stage_params(rep, "global_centers") == 0);
  CHECK(stage_params(rep, "local_centers") == 0);
  CHECK(rep.params == 140);
}

TEST_CASE("the offset table holds one learned vector per clamped offset pair") {
  SacaConfig cfg = small_config();
  for (int xi : {0, 1, 3}) {
    cfg.xi = xi;
    const std::int64_t side = 2 * xi + 1;
    CHECK(stage_params(profile(cfg), "position_bias") == side * side * cfg.c_attn);
  }
  cfg.c_backbone = 1;
  cfg.c_attn = 1;
  cfg.epsilon = 1;
  cfg.k_classes = 1;
  cfg.xi = 0;
  ProfileReport rep = profile(cfg);
  CHECK(stage_params(rep, "position_bias") == 1);
  CHECK(rep.params == 2 + 3 + 2 + 1 + 2);
}

TEST_CASE("profiled parameters equal the live module parameter count") {
  Rng rng(60);
  int checked = 0;
  while (checked < 10) {
    SacaConfig cfg;
    cfg.height = 8 * (1 + static_cast<int>(rng.uniform_int(3)));
    cfg.width = 8 * (1 + static_cast<int>(rng.uniform_int(3)));
    cfg.c_backbone = 1 + static_cast<int>(rng.uniform_int(8));
    cfg.epsilon = 1 + static_cast<int>(rng.uniform_int(4));
    cfg.c_attn = cfg.epsilon * (1 + static_cast<int>(rng.uniform_int(4)));
    cfg.k_classes = 1 + static_cast<int>(rng.uniform_int(4));
    cfg.patch_h = 1 + static_cast<int>(rng.uniform_int(4));
    cfg.patch_w = 1 + static_cast<int>(rng.uniform_int(4));
    cfg.xi = static_cast<int>(rng.uniform_int(4));
    SacaParams p = SacaParams::init(cfg);
    CHECK(profile(cfg).params == static_cast<std::int64_t>(p.module_scalar_count()));
    CHECK(p.scalar_count() > p.module_scalar_count());
    ++checked;
  }
}

TEST_CASE("totals are the exact sums of the breakdown") {
  ProfileReport rep = profile(small_config());
  std::int64_t params = 0, flops = 0;
  for (const StageCost& s : rep.breakdown) {
    params += s.params;
    flops += s.flops;
    CHECK(s.flops >= 0);
    CHECK(s.bytes >= 0);
  }
  CHECK(rep.params == params);
  CHECK(rep.flops == flops);
  CHECK(rep.peak_bytes > 0);
}

TEST_CASE("work grows with every resolution and width knob") {
  const SacaConfig base = small_config();
  auto flops_of = [](SacaConfig c) { return profile(c).flops; };
  SacaConfig cfg = base;
  cfg.height = 16;
  CHECK(flops_of(cfg) > flops_of(base));
  cfg = base;
  cfg.width = 16;
  CHECK(flops_of(cfg) > flops_of(base));
  cfg = base;
  cfg.c_backbone = 8;
  CHECK(flops_of(cfg) > flops_of(base));
  cfg = base;
  cfg.c_attn = 8;
  cfg.epsilon = 2;
  CHECK(flops_of(cfg) > flops_of(base));
  cfg = base;
  cfg.k_classes = 4;
  CHECK(flops_of(cfg) > flops_of(base));
  // widening the offset window adds parameters but no arithmetic
  cfg = base;
  cfg.xi = 3;
  CHECK(flops_of(cfg) == flops_of(base));
  CHECK(profile(cfg).params > profile(base).params);
}

TEST_CASE("attention work per patch is quadratic in the patch area") {
  SacaConfig cfg = small_config();
  cfg.height = 32;
  cfg.width = 32;
  cfg.patch_h = 2;
  cfg.patch_w = 2;
  const std::int64_t pp2 = profile(cfg).per_patch_attention_flops();
  cfg.patch_h = 4;
  cfg.patch_w = 4;
  const std::int64_t pp4 = profile(cfg).per_patch_attention_flops();
  CHECK(pp4 == 16 * pp2);  // area ratio 4, squared, in exact integer arithmetic
  // closed form: hw^2 * (6*C + 6) for the four attention stages
  const std::int64_t hw = 16;
  CHECK(pp4 == hw * hw * (6 * cfg.c_attn + 6));
}

TEST_CASE("doubling the image scales attention by patch count alone") {
  SacaConfig cfg = small_config();
  cfg.height = 16;
  cfg.width = 16;
  ProfileReport a = profile(cfg);
  cfg.height = 32;
  cfg.width = 32;
  ProfileReport b = profile(cfg);
  CHECK(b.params == a.params);
  CHECK(b.patches == 4 * a.patches);
  CHECK(b.per_patch_attention_flops() == a.per_patch_attention_flops());
  CHECK(attention_flops(b) == 4 * attention_flops(a));
}

TEST_CASE("the patch count follows the padded tiling") {
  SacaConfig cfg = small_config();
  cfg.height = 32;
  cfg.width = 32;
  cfg.patch_h = 2;
  cfg.patch_w = 2;
  CHECK(profile(cfg).patches == 16);
  cfg.patch_h = 3;  // 8 rows pad to 9
  CHECK(profile(cfg).patches == 3 * 4);
}

TEST_CASE("report JSON round-trips byte for byte") {
  ProfileReport rep = profile(small_config());
  const std::string text = rep.to_json();
  ProfileReport back = ProfileReport::from_json_text(text);
  CHECK(back.params == rep.params);
  CHECK(back.flops == rep.flops);
  CHECK(back.peak_bytes == rep.peak_bytes);
  REQUIRE(back.breakdown.size() == rep.breakdown.size());
  for (std::size_t i = 0; i < rep.breakdown.size(); ++i) {
    CHECK(back.breakdown[i].stage == rep.breakdown[i].stage);
    CHECK(back.breakdown[i].flops == rep.breakdown[i].flops);
  }
  CHECK(back.to_json() == text);
  // the patch count is derived, not serialized
  CHECK_THROWS_AS((void)back.per_patch_attention_flops(), ValueError);
}

TEST_CASE("report JSON states its counting conventions") {
  nlohmann::json j = nlohmann::json::parse(profile(small_config()).to_json());
  CHECK(j["conventions"]["mac_flops"] == 2);
  CHECK(j["conventions"]["softmax_flops_per_element"] == 4);
  CHECK(j["conventions"]["activation_bytes_per_value"] == 4);
}

TEST_CASE("the table renders millions with one decimal") {
  ProfileReport rep;
  rep.params = 2700000;
  rep.flops = 1500000000;
  rep.peak_bytes = 3 * 1024 * 1024;
  const std::string table = rep.to_table();
  CHECK(table.find("2.7") != std::string::npos);
  CHECK(table.find("1.5") != std::string::npos);
  CHECK(table.find("3.0") != std::string::npos);
  CHECK(table.find("stage") != std::string::npos);
}

TEST_CASE("malformed report text is rejected as an input error") {
  CHECK_THROWS_AS((void)ProfileReport::from_json_text("{"), IoError);
  CHECK_THROWS_AS((void)ProfileReport::from_json_text("[]"), IoError);
  CHECK_THROWS_AS((void)ProfileReport::from_json_text("{\"params\":1}"), IoError);
  CHECK_THROWS_AS(
      (void)ProfileReport::from_json_text(
          "{\"params\":1,\"flops\":\"x\",\"peak_bytes\":0,\"breakdown\":[]}"),
      IoError);
}

}  // TEST_SUITE
