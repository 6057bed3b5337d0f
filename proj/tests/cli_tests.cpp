#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

// End-to-end checks driving the installed `nullctl` binary through a shell.
// The binary path arrives as --bin=... (or NULLCTL_BIN); everything runs in
// throwaway directories under the system temp root.

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string g_bin;

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  const std::string cmd = env_prefix + g_bin + " " + args + " 2>&1";
  RunResult result;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof(buf), pipe)) {
    result.output.append(buf, got);
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "nullctl_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const json& doc) {
  const fs::path path = dir / "config.json";
  std::ofstream out(path);
  out << doc.dump(2);
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  REQUIRE(in.good());
  json doc;
  in >> doc;
  return doc;
}

json quick_synth_config(const std::string& out) {
  return {{"system", {{"type", "heat1d"}, {"n", 10}, {"scheme", "eliminated"}}},
          {"dual", {{"p", 2.0}, {"beta", 2.0}}},
          {"optimizer",
           {{"method", "adaptive-gradient"}, {"grad_tol", 1e-8}, {"max_iters", 20000}}},
          {"out", out}};
}

}  // namespace

TEST_CASE("synthesize demands a config file") {
  const auto res = run_cli("synthesize");
  CHECK(res.exit_code == 1);
  CHECK(res.output.find("config") != std::string::npos);
}

TEST_CASE("synthesize writes control, trace and a faithful manifest") {
  const auto dir = fresh_dir("synth_ok");
  const auto out = dir / "run";
  const auto cfg = write_config(dir, quick_synth_config(out.string()));

  const auto res = run_cli("synthesize --config " + cfg.string());
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(out / "control.csv"));
  CHECK(fs::exists(out / "trace.csv"));

  const json manifest = read_manifest(out);
  CHECK(manifest.at("command") == "synthesize");
  CHECK(manifest.at("version") == "0.1.0");
  CHECK(manifest.at("notes").at("termination") == "grad_tol_met");
  const auto& metrics = manifest.at("metrics");
  const double phi_norm = metrics.at("phi_norm").get<double>();
  const double residual = metrics.at("terminal_residual").get<double>();
  CHECK(residual <= 1e-6 * (1.0 + phi_norm));
  CHECK(metrics.at("grad_norm").get<double>() <= 1e-8);
  CHECK(metrics.at("h_beta").get<double>() > 0.0);

  // the trace has a header plus at least the start and final iterates
  std::istringstream trace(slurp(out / "trace.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(trace, line)) ++lines;
  CHECK(lines >= 3);
}

TEST_CASE("synthesize reruns are byte-identical") {
  const auto dir = fresh_dir("synth_repeat");
  const auto cfg = write_config(dir, quick_synth_config((dir / "a").string()));

  CHECK(run_cli("synthesize --config " + cfg.string()).exit_code == 0);
  CHECK(run_cli("synthesize --config " + cfg.string() + " --out " + (dir / "b").string())
            .exit_code == 0);
  CHECK(slurp(dir / "a" / "control.csv") == slurp(dir / "b" / "control.csv"));
  CHECK(slurp(dir / "a" / "trace.csv") == slurp(dir / "b" / "trace.csv"));
}

TEST_CASE("synthesize signals an exhausted iteration budget") {
  const auto dir = fresh_dir("synth_budget");
  json doc = quick_synth_config((dir / "run").string());
  doc["optimizer"] = {{"method", "paper-gradient"},
                      {"step", 0.01},
                      {"grad_tol", 1e-10},
                      {"max_iters", 3}};
  const auto cfg = write_config(dir, doc);

  const auto res = run_cli("synthesize --config " + cfg.string());
  CHECK(res.exit_code == 2);
  CHECK(res.output.find("max_iters") != std::string::npos);
  // outputs are still written for inspection
  CHECK(fs::exists(dir / "run" / "control.csv"));
  CHECK(read_manifest(dir / "run").at("notes").at("termination") == "max_iters");
}

TEST_CASE("an invalid exponent fails with a diagnostic naming the field") {
  const auto dir = fresh_dir("synth_bad_p");
  json doc = quick_synth_config((dir / "run").string());
  doc["dual"]["p"] = 2.5;
  const auto cfg = write_config(dir, doc);

  const auto res = run_cli("synthesize --config " + cfg.string());
  CHECK(res.exit_code == 1);
  CHECK(res.output.find("p:") != std::string::npos);
}

TEST_CASE("zero initial data steers trivially") {
  const auto dir = fresh_dir("synth_zero");
  json doc = quick_synth_config((dir / "run").string());
  doc["y0"] = "zero";
  const auto cfg = write_config(dir, doc);

  CHECK(run_cli("synthesize --config " + cfg.string()).exit_code == 0);
  const auto metrics = read_manifest(dir / "run").at("metrics");
  CHECK(metrics.at("phi_norm").get<double>() == 0.0);
  CHECK(metrics.at("y_T_norm").get<double>() == 0.0);
  CHECK(metrics.at("iterations").get<double>() == 0.0);
}

TEST_CASE("table replication honors the mesh bound and reruns identically") {
  const auto dir = fresh_dir("table3");
  const std::string args =
      "table table3 --max-n 10 --out " + (dir / "a").string();
  CHECK(run_cli(args).exit_code == 0);

  const std::string body = slurp(dir / "a" / "table3.csv");
  CHECK(body.find("skipped") != std::string::npos);  // 1D-100 and 1D-500 rows
  CHECK(body.find("1D-500") != std::string::npos);
  CHECK(body.find("4.4266") != std::string::npos);  // published reference column

  CHECK(run_cli("table table3 --max-n 10 --out " + (dir / "b").string()).exit_code == 0);
  CHECK(body == slurp(dir / "b" / "table3.csv"));

  CHECK(run_cli("table table9 --out " + (dir / "c").string()).exit_code != 0);
}

TEST_CASE("the observability sweep validates its mesh list") {
  const auto dir = fresh_dir("sweep");
  const auto bad = run_cli("observability --n-list 10,20 --out " + (dir / "x").string());
  CHECK(bad.exit_code == 1);
  CHECK(bad.output.find("need at least 3 meshes") != std::string::npos);

  CHECK(run_cli("observability --n-list 10,14,20 --seed 7 --out " + (dir / "a").string())
            .exit_code == 0);
  CHECK(run_cli("observability --n-list 10,14,20 --seed 7 --out " + (dir / "b").string())
            .exit_code == 0);
  const std::string body = slurp(dir / "a" / "sweep.csv");
  CHECK(body == slurp(dir / "b" / "sweep.csv"));
  CHECK(body.find("projected-descent") != std::string::npos);
}

TEST_CASE("the rate measurement reports its fitted slope") {
  const auto dir = fresh_dir("rates");
  CHECK(run_cli("rates --n-list 10,20,40 --t 0.5 --out " + dir.string()).exit_code == 0);
  const json manifest = read_manifest(dir);
  const double slope = manifest.at("metrics").at("slope").get<double>();
  CHECK(slope > 1.5);
  CHECK(slope < 2.5);

  std::istringstream csv(slurp(dir / "rates.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 4);  // header + one row per mesh
}

TEST_CASE("the duality audit passes on the built-in demo") {
  const auto dir = fresh_dir("duality");
  CHECK(run_cli("duality --out " + dir.string()).exit_code == 0);
  CHECK(fs::exists(dir / "duality.csv"));
  const json manifest = read_manifest(dir);
  const auto& metrics = manifest.at("metrics");
  const double gap = metrics.at("gap").get<double>();
  const double dual = metrics.at("dual_value").get<double>();
  CHECK(std::abs(gap) <= 1e-6 * (1.0 + std::abs(dual)));
  CHECK(metrics.at("steered").get<double>() == 1.0);
}

TEST_CASE("output directory resolution prefers the flag over the environment") {
  const auto dir = fresh_dir("outdirs");
  const auto envdir = dir / "from_env";
  const auto flagdir = dir / "from_flag";

  CHECK(run_cli("duality", "NULLCTL_OUT=" + envdir.string() + " ").exit_code == 0);
  CHECK(fs::exists(envdir / "manifest.json"));

  CHECK(run_cli("duality --out " + flagdir.string(),
                "NULLCTL_OUT=" + (dir / "ignored").string() + " ")
            .exit_code == 0);
  CHECK(fs::exists(flagdir / "manifest.json"));
  CHECK_FALSE(fs::exists(dir / "ignored"));
}

int main(int argc, char** argv) {
  doctest::Context ctx;
  std::vector<const char*> pass;
  pass.push_back(argv[0]);
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg.rfind("--bin=", 0) == 0) {
      g_bin = arg.substr(6);
    } else {
      pass.push_back(argv[i]);
    }
  }
  if (g_bin.empty()) {
    if (const char* env = std::getenv("NULLCTL_BIN")) g_bin = env;
  }
  if (g_bin.empty()) {
    std::fprintf(stderr, "cli_tests: pass --bin=<path to nullctl> or set NULLCTL_BIN\n");
    return 1;
  }
  ctx.applyCommandLine(static_cast<int>(pass.size()), pass.data());
  return ctx.run();
}
