#include "saca/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "saca/attention.hpp"
#include "saca/class_center.hpp"
#include "saca/errors.hpp"
#include "saca/ops.hpp"
#include "saca/pipeline.hpp"
#include "saca/relative_position.hpp"
#include "saca/rng.hpp"
#include "saca/scene_context.hpp"
#include "saca/tape.hpp"

namespace saca {

bool GradCheckSummary::all_pass() const {
  for (const GradCheckRecord& r : records) {
    if (!r.pass) return false;
  }
  return !records.empty();
}

double GradCheckSummary::worst() const {
  double w = 0.0;
  for (const GradCheckRecord& r : records) w = std::max(w, r.max_rel_err);
  return w;
}

GradCheckRecord check_gradients(const std::string& name,
                                const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                std::vector<Tensor> inputs, double tolerance, double step) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    GradTape tape;
    GradTape::Scope scope(tape);
    Tensor loss = f(inputs);
    if (loss.size() != 1) {
      throw ValueError("check_gradients: " + name + ": loss is not scalar");
    }
    tape.backward(loss);
  }
  GradCheckRecord rec{name, 0.0, tolerance, false};
  for (Tensor& t : inputs) {
    auto& v = t.values();
    const auto& g = t.grad();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + step;
      const double fp = f(inputs).item();
      v[i] = orig - step;
      const double fm = f(inputs).item();
      v[i] = orig;
      const double num = (fp - fm) / (2.0 * step);
      const double ana = g[i];
      const double err = std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
      rec.max_rel_err = std::max(rec.max_rel_err, err);
    }
  }
  rec.pass = rec.max_rel_err <= tolerance;
  return rec;
}

namespace {

constexpr double kPrimitiveTol = 1e-5;
constexpr double kPipelineTol = 1e-4;

Tensor rand_t(const Shape& s, Rng& rng) { return Tensor::uniform(s, -1.0, 1.0, rng); }

// Uniform values pushed away from zero, for checks crossing a ReLU.
Tensor rand_nudged(const Shape& s, Rng& rng, double margin = 1e-3) {
  Tensor t = rand_t(s, rng);
  for (double& v : t.values()) v += (v < 0.0 ? -margin : margin);
  return t;
}

// loss = sum(out * fixed_weights); makes every output element load-bearing.
Tensor ws(const Tensor& out, const Tensor& weights) { return sum_all(mul(out, weights)); }

void add_record(GradCheckSummary& sum, GradCheckRecord rec) { sum.records.push_back(std::move(rec)); }

std::string tag(const std::string& module, const std::string& op, int seed) {
  return module + "/" + op + " s" + std::to_string(seed);
}

void tensor_suite(GradCheckSummary& out, int seed) {
  Rng rng(0x7e1150 + static_cast<std::uint64_t>(seed));
  const std::string m = "tensor";
  auto chk = [&](const std::string& op,
                 const std::function<Tensor(const std::vector<Tensor>&)>& f,
                 std::vector<Tensor> inputs) {
    add_record(out, check_gradients(tag(m, op, seed), f, std::move(inputs), kPrimitiveTol));
  };

  {
    Tensor w = rand_t({3, 4}, rng);
    chk("add", [w](const std::vector<Tensor>& in) { return ws(add(in[0], in[1]), w); },
        {rand_t({3, 4}, rng), rand_t({3, 4}, rng)});
    chk("sub", [w](const std::vector<Tensor>& in) { return ws(sub(in[0], in[1]), w); },
        {rand_t({3, 4}, rng), rand_t({3, 4}, rng)});
    chk("mul", [w](const std::vector<Tensor>& in) { return ws(mul(in[0], in[1]), w); },
        {rand_t({3, 4}, rng), rand_t({3, 4}, rng)});
    chk("scale", [w](const std::vector<Tensor>& in) { return ws(scale(in[0], 1.7), w); },
        {rand_t({3, 4}, rng)});
    chk("add_scalar", [w](const std::vector<Tensor>& in) { return ws(add_scalar(in[0], 0.3), w); },
        {rand_t({3, 4}, rng)});
    chk("relu", [w](const std::vector<Tensor>& in) { return ws(relu(in[0]), w); },
        {rand_nudged({3, 4}, rng)});
    chk("sigmoid", [w](const std::vector<Tensor>& in) { return ws(sigmoid(in[0]), w); },
        {rand_t({3, 4}, rng)});
  }
  {
    Tensor w = rand_t({4, 3}, rng);
    chk("mul_rowvec", [w](const std::vector<Tensor>& in) { return ws(mul_rowvec(in[0], in[1]), w); },
        {rand_t({4, 3}, rng), rand_t({3}, rng)});
    chk("add_rowvec", [w](const std::vector<Tensor>& in) { return ws(add_rowvec(in[0], in[1]), w); },
        {rand_t({4, 3}, rng), rand_t({3}, rng)});
    chk("transpose", [w](const std::vector<Tensor>& in) { return ws(transpose(in[0]), w); },
        {rand_t({3, 4}, rng)});
  }
  {
    Tensor w = rand_t({4, 2, 3}, rng);
    chk("permute", [w](const std::vector<Tensor>& in) { return ws(permute(in[0], {2, 0, 1}), w); },
        {rand_t({2, 3, 4}, rng)});
  }
  {
    Tensor w = rand_t({2, 5}, rng);
    chk("concat", [w](const std::vector<Tensor>& in) { return ws(concat({in[0], in[1]}, 1), w); },
        {rand_t({2, 3}, rng), rand_t({2, 2}, rng)});
  }
  {
    Tensor w = rand_t({4}, rng);
    chk("take0", [w](const std::vector<Tensor>& in) { return ws(take0(in[0], 1), w); },
        {rand_t({3, 4}, rng)});
  }
  {
    Tensor w = rand_t({4, 2, 3, 2}, rng);
    chk("split_patches", [w](const std::vector<Tensor>& in) { return ws(split_patches(in[0], 2, 3), w); },
        {rand_t({4, 6, 2}, rng)});
  }
  {
    Tensor w = rand_t({4, 6, 2}, rng);
    chk("stitch_patches",
        [w](const std::vector<Tensor>& in) {
          return ws(stitch_patches(split_patches(in[0], 2, 3), 2, 2), w);
        },
        {rand_t({4, 6, 2}, rng)});
    chk("pad_hw", [w](const std::vector<Tensor>& in) { return ws(pad_hw(in[0], 1, 2), w); },
        {rand_t({3, 4, 2}, rng)});
  }
  {
    Tensor w = rand_t({3, 3, 2}, rng);
    chk("crop_hw", [w](const std::vector<Tensor>& in) { return ws(crop_hw(in[0], 3, 3), w); },
        {rand_t({4, 5, 2}, rng)});
  }
  {
    Tensor w = rand_t({3, 5}, rng);
    chk("softmax.axis1", [w](const std::vector<Tensor>& in) { return ws(softmax(in[0], 1), w); },
        {rand_t({3, 5}, rng)});
    chk("softmax.axis0", [w](const std::vector<Tensor>& in) { return ws(softmax(in[0], 0), w); },
        {rand_t({3, 5}, rng)});
  }
  {
    Tensor w = rand_t({2}, rng);
    chk("pool_avg", [w](const std::vector<Tensor>& in) { return ws(pool_avg(in[0]), w); },
        {rand_t({3, 4, 2}, rng)});
    chk("pool_max", [w](const std::vector<Tensor>& in) { return ws(pool_max(in[0]), w); },
        {rand_t({3, 4, 2}, rng)});
  }
  chk("sum_all", [](const std::vector<Tensor>& in) { return scale(sum_all(in[0]), 0.7); },
      {rand_t({3, 4}, rng)});
  {
    Tensor w = rand_t({3, 2}, rng);
    chk("matmul", [w](const std::vector<Tensor>& in) { return ws(matmul(in[0], in[1]), w); },
        {rand_t({3, 4}, rng), rand_t({4, 2}, rng)});
  }
  {
    Tensor w = rand_t({2, 3, 2}, rng);
    chk("matmul.batched", [w](const std::vector<Tensor>& in) { return ws(matmul(in[0], in[1]), w); },
        {rand_t({2, 3, 4}, rng), rand_t({2, 4, 2}, rng)});
    chk("matmul.shared_rhs",
        [w](const std::vector<Tensor>& in) { return ws(matmul(in[0], in[1]), w); },
        {rand_t({2, 3, 4}, rng), rand_t({4, 2}, rng)});
    chk("matmul.shared_lhs",
        [w](const std::vector<Tensor>& in) { return ws(matmul(in[0], in[1]), w); },
        {rand_t({3, 4}, rng), rand_t({2, 4, 2}, rng)});
  }
  {
    Tensor w = rand_t({6, 8, 2}, rng);
    chk("bilinear_upsample",
        [w](const std::vector<Tensor>& in) { return ws(bilinear_upsample(in[0], 2), w); },
        {rand_t({3, 4, 2}, rng)});
  }
  {
    Tensor labels({6}, {0, 1, 2, 255, 1, 0});
    chk("cross_entropy",
        [labels](const std::vector<Tensor>& in) {
          return scale(cross_entropy(in[0], labels, 255), 1.3);
        },
        {rand_t({6, 3}, rng)});
  }
  {
    Tensor w = rand_t({9, 18}, rng);
    chk("im2col", [w](const std::vector<Tensor>& in) { return ws(im2col(in[0], 3, 3, 2, 1), w); },
        {rand_t({5, 5, 2}, rng)});
  }
  {
    Tensor w = rand_t({3, 3, 4}, rng);
    chk("conv2d",
        [w](const std::vector<Tensor>& in) { return ws(conv2d(in[0], in[1], in[2], 2, 1), w); },
        {rand_t({6, 6, 3}, rng), rand_t({3, 3, 3, 4}, rng), rand_t({4}, rng)});
  }
}

void attention_suite(GradCheckSummary& out, int seed) {
  Rng rng(0xa77e + static_cast<std::uint64_t>(seed));
  const std::string m = "attention";
  {
    Tensor w = rand_t({3, 3, 2}, rng);
    add_record(out, check_gradients(
        tag(m, "project", seed),
        [w](const std::vector<Tensor>& in) { return ws(project(in[0], in[1]), w); },
        {rand_t({3, 3, 4}, rng), rand_t({4, 2}, rng)}, kPrimitiveTol));
  }
  {
    Tensor w = rand_t({5, 7}, rng);
    add_record(out, check_gradients(
        tag(m, "affinity", seed),
        [w](const std::vector<Tensor>& in) { return ws(affinity(in[0], in[1]), w); },
        {rand_t({5, 8}, rng), rand_t({7, 8}, rng)}, kPrimitiveTol));
  }
  {
    Tensor w = rand_t({4, 3}, rng);
    add_record(out, check_gradients(
        tag(m, "softmax_aggregate", seed),
        [w](const std::vector<Tensor>& in) {
          Tensor alpha = softmax(affinity(in[0], in[1]), 1);
          return ws(aggregate(alpha, in[2]), w);
        },
        {rand_t({4, 3}, rng), rand_t({5, 3}, rng), rand_t({5, 3}, rng)}, kPrimitiveTol));
  }
  {
    Tensor w = rand_t({2, 2, 2}, rng);
    add_record(out, check_gradients(
        tag(m, "general_attention", seed),
        [w](const std::vector<Tensor>& in) {
          AttentionProjections p;
          p.c_in = 3;
          p.c_out = 2;
          p.wq = in[3];
          p.wk = in[4];
          p.wv = in[5];
          return ws(general_attention(in[0], in[1], in[2], p), w);
        },
        {rand_t({2, 2, 3}, rng), rand_t({2, 2, 3}, rng), rand_t({2, 2, 3}, rng),
         rand_t({3, 2}, rng), rand_t({3, 2}, rng), rand_t({3, 2}, rng)},
        kPrimitiveTol));
  }
}

void context_suite(GradCheckSummary& out, int seed) {
  Rng rng(0xc0de + static_cast<std::uint64_t>(seed));
  const std::string m = "context";
  for (bool hidden_relu : {true, false}) {
    Tensor w = rand_t({5, 4}, rng);
    add_record(out, check_gradients(
        tag(m, hidden_relu ? "gate_with_relu" : "gate_linear", seed),
        [w, hidden_relu](const std::vector<Tensor>& in) {
          ContextMLP mlp;
          mlp.w0 = in[1];
          mlp.w1 = in[2];
          mlp.epsilon = 2;
          mlp.hidden_relu = hidden_relu;
          Tensor c = context_vector(in[0], mlp);
          return ws(gate_queries(in[3], c), w);
        },
        {rand_t({3, 3, 4}, rng), rand_t({4, 2}, rng), rand_t({2, 4}, rng), rand_t({5, 4}, rng)},
        kPrimitiveTol));
  }
}

void position_suite(GradCheckSummary& out, int seed) {
  Rng rng(0x9051 + static_cast<std::uint64_t>(seed));
  const std::string m = "position";
  {
    Tensor w = rand_t({2}, rng);
    add_record(out, check_gradients(
        tag(m, "lookup", seed),
        [w](const std::vector<Tensor>& in) {
          PositionBucket b;
          b.xi = 1;
          b.p = in[0];
          return ws(lookup(b, {0, 0}, {2, 1}), w);  // x offset clamps to -1
        },
        {rand_t({3, 3, 2}, rng)}, kPrimitiveTol));
  }
  {
    const std::vector<GridPos> pos = grid_positions(3, 3);
    Tensor w = rand_t({9, 9}, rng);
    add_record(out, check_gradients(
        tag(m, "position_bias", seed),
        [w, pos](const std::vector<Tensor>& in) {
          PositionBucket b;
          b.xi = 1;  // offsets reach +-2, so clamping is active
          b.p = in[0];
          return ws(position_bias(b, in[1], pos, pos), w);
        },
        {rand_t({3, 3, 4}, rng), rand_t({9, 4}, rng)}, kPrimitiveTol));
  }
  {
    const std::vector<GridPos> pos = grid_positions(2, 2);
    Tensor w = rand_t({4, 4}, rng);
    add_record(out, check_gradients(
        tag(m, "scene_aware_affinity", seed),
        [w, pos](const std::vector<Tensor>& in) {
          PositionBucket b;
          b.xi = 1;
          b.p = in[3];
          return ws(scene_aware_affinity(in[0], in[1], in[2], b, pos, pos), w);
        },
        {rand_t({4, 3}, rng), rand_t({4, 3}, rng), rand_t({3}, rng), rand_t({3, 3, 3}, rng)},
        kPrimitiveTol));
  }
}

void ccg_suite(GradCheckSummary& out, int seed) {
  Rng rng(0xcc6 + static_cast<std::uint64_t>(seed));
  const std::string m = "ccg";
  {
    Tensor w = rand_t({2, 2, 2}, rng);
    add_record(out, check_gradients(
        tag(m, "pre_classify", seed),
        [w](const std::vector<Tensor>& in) {
          PreClassifier pc;
          pc.k_classes = 2;
          pc.conv1 = in[1];
          pc.conv2 = in[2];
          return ws(pre_classify(in[0], pc), w);
        },
        {rand_t({2, 2, 3}, rng), rand_t({3, 3}, rng), rand_t({3, 2}, rng)}, kPrimitiveTol));
  }
  {
    Tensor w = rand_t({2, 4}, rng);
    add_record(out, check_gradients(
        tag(m, "class_centers", seed),
        [w](const std::vector<Tensor>& in) {
          return ws(class_centers(in[0], in[1]).centers, w);
        },
        {rand_t({3, 3, 4}, rng), rand_t({3, 3, 2}, rng)}, kPrimitiveTol));
  }
  {
    Tensor logits({2, 2, 2}, {1.0, -1.0, -0.5, 0.5, 2.0, 0.0, -1.5, 1.0});
    Tensor w = rand_t({2, 2, 3}, rng);
    add_record(out, check_gradients(
        tag(m, "scatter_centers", seed),
        [w, logits](const std::vector<Tensor>& in) {
          ClassCenters cc;
          cc.centers = in[0];
          cc.weights_used = Tensor::ones({2});
          return ws(scatter_centers(cc, logits), w);
        },
        {rand_t({2, 3}, rng)}, kPrimitiveTol));
  }
  {
    Tensor w = rand_t({2, 2, 2, 3}, rng);
    add_record(out, check_gradients(
        tag(m, "local_class_centers", seed),
        [w](const std::vector<Tensor>& in) { return ws(local_class_centers(in[0], in[1]), w); },
        {rand_t({2, 2, 2, 3}, rng), rand_t({2, 2, 2, 2}, rng)}, kPrimitiveTol));
  }
  {
    Tensor w = rand_t({4, 4, 3}, rng);
    add_record(out, check_gradients(
        tag(m, "ccg_end_to_end", seed),
        [w](const std::vector<Tensor>& in) {
          PreClassifier pc;
          pc.k_classes = 2;
          pc.conv1 = in[1];
          pc.conv2 = in[2];
          Tensor d = pre_classify(in[0], pc);
          return ws(scatter_centers(class_centers(in[0], d), d), w);
        },
        {rand_t({4, 4, 3}, rng), rand_t({3, 3}, rng), rand_t({3, 2}, rng)}, kPrimitiveTol));
  }
}

void pipeline_suite(GradCheckSummary& out, int seed) {
  Rng rng(0x51be11 + static_cast<std::uint64_t>(seed));
  SacaConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.c_backbone = 4;
  cfg.c_attn = 4;
  cfg.k_classes = 3;
  cfg.patch_h = 2;
  cfg.patch_w = 2;
  cfg.xi = 1;
  cfg.epsilon = 2;
  cfg.aux_loss_weight = 0.4;

  Tensor image = rand_t({8, 8, 3}, rng);
  Tensor labels({8, 8});
  for (double& v : labels.values()) {
    v = rng.uniform_int(8) == 0 ? 255.0 : static_cast<double>(rng.uniform_int(cfg.k_classes));
  }

  std::vector<Tensor> inputs = {
      rand_t({3, 3, 3, 4}, rng), rand_t({4}, rng),   // backbone conv1
      rand_t({3, 3, 4, 4}, rng), rand_t({4}, rng),   // backbone conv2
      rand_t({4, 4}, rng),       rand_t({4, 3}, rng),  // pre-classifier
      rand_t({4, 4}, rng),       rand_t({4, 4}, rng), rand_t({4, 4}, rng),  // projections
      rand_t({4, 2}, rng),       rand_t({2, 4}, rng),  // context mlp
      rand_t({3, 3, 4}, rng),                          // bucket
      rand_t({8, 3}, rng),                             // head
  };
  auto f = [cfg, image, labels](const std::vector<Tensor>& in) {
    SacaParams p;
    p.bb1_w = in[0];
    p.bb1_b = in[1];
    p.bb2_w = in[2];
    p.bb2_b = in[3];
    p.pre.conv1 = in[4];
    p.pre.conv2 = in[5];
    p.pre.k_classes = cfg.k_classes;
    p.attn.wq = in[6];
    p.attn.wk = in[7];
    p.attn.wv = in[8];
    p.attn.c_in = cfg.c_backbone;
    p.attn.c_out = cfg.c_attn;
    p.context.w0 = in[9];
    p.context.w1 = in[10];
    p.context.epsilon = cfg.epsilon;
    p.context.hidden_relu = cfg.context_hidden_relu;
    p.bucket.xi = cfg.xi;
    p.bucket.p = in[11];
    p.head = in[12];
    ForwardResult r = saca_forward(image, p, cfg);
    return saca_loss(r.logits_main, r.logits_aux, labels, cfg.aux_loss_weight);
  };
  add_record(out, check_gradients(tag("pipeline", "loss_vs_all_params", seed), f,
                                  std::move(inputs), kPipelineTol));
}

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> names = {"tensor",   "attention", "context",
                                                 "position", "ccg",       "pipeline"};
  return names;
}

GradCheckSummary run_gradcheck(const std::string& module, int seeds) {
  if (seeds < 1) throw ValueError("run_gradcheck: seeds must be >= 1");
  GradCheckSummary out;
  auto run_one = [&](const std::string& name) {
    for (int s = 0; s < seeds; ++s) {
      if (name == "tensor") tensor_suite(out, s);
      else if (name == "attention") attention_suite(out, s);
      else if (name == "context") context_suite(out, s);
      else if (name == "position") position_suite(out, s);
      else if (name == "ccg") ccg_suite(out, s);
      else if (name == "pipeline") pipeline_suite(out, s);
      else throw ValueError("run_gradcheck: unknown module \"" + name + "\"");
    }
  };
  if (module == "all") {
    for (const std::string& name : gradcheck_modules()) run_one(name);
  } else {
    run_one(module);
  }
  return out;
}

}  // namespace saca
