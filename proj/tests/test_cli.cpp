#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "saca/dataset.hpp"
#include "saca/stf.hpp"
#include "saca/tensor.hpp"

namespace fs = std::filesystem;
using namespace saca;

namespace {

const std::string kCli = SACA_CLI_PATH;

int run(const std::string& args) {
  const int rc = std::system((kCli + " " + args).c_str());
  if (rc == -1) return -1;
  return WEXITSTATUS(rc);
}

fs::path prep(const std::string& name) {
  fs::path dir = fs::path("cli_scratch") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTinyConfig =
    "{\"height\":8,\"width\":8,\"c_backbone\":4,\"c_attn\":4,\"k_classes\":2,"
    "\"patch_h\":2,\"patch_w\":2,\"xi\":1,\"epsilon\":2,\"steps\":2,"
    "\"learning_rate\":0.05,\"seed\":7}";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage problems exit with the validation code") {
  CHECK(run("") == 1);
  CHECK(run("no-such-command") == 1);
  CHECK(run("profile") == 1);  // missing required option
  CHECK(run("--help > /dev/null") == 0);
}

TEST_CASE("profile prints a parseable report for a valid config") {
  fs::path dir = prep("profile");
  write_text(dir / "cfg.json", kTinyConfig);
  fs::path out = dir / "report.json";
  CHECK(run("profile --config " + (dir / "cfg.json").string() + " > " + out.string()) == 0);
  nlohmann::json j = nlohmann::json::parse(read_text(out));
  CHECK(j["params"] == 140);
  CHECK(j["breakdown"].is_array());

  fs::path table = dir / "report.txt";
  CHECK(run("profile --format table --config " + (dir / "cfg.json").string() + " > " +
            table.string()) == 0);
  CHECK(read_text(table).find("stage") != std::string::npos);
  CHECK(run("profile --format yaml --config " + (dir / "cfg.json").string()) == 1);
}

TEST_CASE("config problems map to distinct exit codes") {
  fs::path dir = prep("config_errors");
  write_text(dir / "broken.json", "{\"height\":8,");
  CHECK(run("profile --config " + (dir / "broken.json").string()) == 2);

  write_text(dir / "unknown.json", "{\"height\":8,\"wdith\":8}");
  CHECK(run("profile --config " + (dir / "unknown.json").string()) == 1);

  CHECK(run("profile --config " + (dir / "missing.json").string()) == 2);
}

TEST_CASE("gradcheck validates its module argument") {
  CHECK(run("gradcheck --module context > /dev/null") == 0);
  CHECK(run("gradcheck --module bogus > /dev/null 2>&1") == 1);
}

TEST_CASE("toy training writes a trace and reloadable parameters") {
  fs::path dir = prep("train");
  write_text(dir / "cfg.json", kTinyConfig);
  fs::path trace = dir / "trace.json";
  fs::path params = dir / "params.bin";
  CHECK(run("train-toy --config " + (dir / "cfg.json").string() + " --out " + trace.string() +
            " --save-params " + params.string() + " > /dev/null") == 0);

  nlohmann::json j = nlohmann::json::parse(read_text(trace));
  CHECK(j["steps"].size() == 2);
  CHECK(j["final"]["oa"].is_number());
  CHECK(j["config"]["height"] == 8);
  CHECK(fs::exists(params));

  // a fresh run from the same config reproduces the trace byte for byte
  fs::path trace2 = dir / "trace2.json";
  CHECK(run("train-toy --config " + (dir / "cfg.json").string() + " --out " + trace2.string() +
            " > /dev/null") == 0);
  CHECK(read_text(trace) == read_text(trace2));
}

TEST_CASE("toy training accepts a directory of tensor files") {
  fs::path dir = prep("train_data");
  write_text(dir / "cfg.json", kTinyConfig);
  fs::path data = dir / "data";
  fs::create_directories(data);
  ToyDatasetSpec spec;
  spec.count = 2;
  spec.height = 8;
  spec.width = 8;
  spec.k_classes = 2;
  spec.seed = 21;
  const auto samples = make_toy_dataset(spec);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = "s" + std::to_string(i);
    save_stf((data / (stem + ".image.stf")).string(), samples[i].image);
    save_stf((data / (stem + ".label.stf")).string(), samples[i].label);
  }
  fs::path trace = dir / "trace.json";
  CHECK(run("train-toy --config " + (dir / "cfg.json").string() + " --data " + data.string() +
            " --out " + trace.string() + " > /dev/null") == 0);
  CHECK(nlohmann::json::parse(read_text(trace))["steps"].size() == 2);

  fs::remove(data / "s1.label.stf");  // orphaned image file
  CHECK(run("train-toy --config " + (dir / "cfg.json").string() + " --data " + data.string() +
            " --out " + trace.string() + " 2> /dev/null") == 1);
}

TEST_CASE("forward runs saved parameters on a saved image deterministically") {
  fs::path dir = prep("forward");
  write_text(dir / "cfg.json", kTinyConfig);
  fs::path params = dir / "params.bin";
  CHECK(run("train-toy --config " + (dir / "cfg.json").string() + " --out " +
            (dir / "trace.json").string() + " --save-params " + params.string() +
            " > /dev/null") == 0);

  ToyDatasetSpec spec;
  spec.count = 1;
  spec.height = 8;
  spec.width = 8;
  spec.k_classes = 2;
  spec.seed = 22;
  save_stf((dir / "img.stf").string(), make_toy_dataset(spec)[0].image);

  fs::path l1 = dir / "logits1.stf", l2 = dir / "logits2.stf";
  CHECK(run("forward --image " + (dir / "img.stf").string() + " --params " + params.string() +
            " --out " + l1.string() + " > /dev/null") == 0);
  CHECK(run("forward --image " + (dir / "img.stf").string() + " --params " + params.string() +
            " --out " + l2.string() + " > /dev/null") == 0);
  Tensor logits = load_stf(l1.string());
  CHECK(logits.shape() == std::vector<int>({8, 8, 2}));
  CHECK(read_text(l1) == read_text(l2));

  CHECK(run("forward --image " + params.string() + " --params " + params.string() + " --out " +
            (dir / "x.stf").string() + " 2> /dev/null") == 2);
}

TEST_CASE("eval scores label maps and reports per-class values") {
  fs::path dir = prep("eval");
  fs::path pred = dir / "pred", gt = dir / "gt";
  fs::create_directories(pred);
  fs::create_directories(gt);
  save_stf((pred / "a.stf").string(), Tensor({2, 2}, {0, 1, 1, 1}));
  save_stf((gt / "a.stf").string(), Tensor({2, 2}, {0, 1, 255, 0}));
  fs::path report = dir / "report.json";
  CHECK(run("eval --pred " + pred.string() + " --gt " + gt.string() + " --report " +
            report.string() + " > /dev/null") == 0);
  nlohmann::json j = nlohmann::json::parse(read_text(report));
  CHECK(j["images"] == 1);
  CHECK(j["classes"] == 2);
  CHECK(j["oa"].get<double>() == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(j["miou"].get<double>() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(j["class_iou"].size() == 2);
}

TEST_CASE("eval rejects missing predictions and fully ignored truth") {
  fs::path dir = prep("eval_errors");
  fs::path pred = dir / "pred", gt = dir / "gt";
  fs::create_directories(pred);
  fs::create_directories(gt);
  save_stf((gt / "a.stf").string(), Tensor({2, 2}, {0, 1, 1, 0}));
  CHECK(run("eval --pred " + pred.string() + " --gt " + gt.string() + " --report " +
            (dir / "r.json").string() + " 2> /dev/null") == 2);

  save_stf((pred / "a.stf").string(), Tensor({2, 2}, {255, 255, 255, 255}));
  save_stf((gt / "a.stf").string(), Tensor({2, 2}, {255, 255, 255, 255}));
  CHECK(run("eval --pred " + pred.string() + " --gt " + gt.string() + " --report " +
            (dir / "r.json").string() + " 2> /dev/null") == 1);
}

}  // TEST_SUITE
