#include "nullctl/config.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <optional>
#include <stdexcept>

namespace nullctl {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw std::invalid_argument(field + ": " + what);
}

void require_known_keys(const json& obj, const std::string& scope,
                        std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) fail(scope.empty() ? item.key() : scope + "." + item.key(), "unknown field");
  }
}

double number_or(const json& obj, const char* key, const std::string& scope, double fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) fail(scope + "." + key, "expected a number");
  return v.get<double>();
}

long integer_or(const json& obj, const char* key, const std::string& scope, long fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) fail(scope + "." + key, "expected an integer");
  return v.get<long>();
}

bool boolean_or(const json& obj, const char* key, const std::string& scope, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) fail(scope + "." + key, "expected a boolean");
  return v.get<bool>();
}

std::string string_or(const json& obj, const char* key, const std::string& scope,
                      const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) fail(scope + "." + key, "expected a string");
  return v.get<std::string>();
}

Matrix parse_matrix(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty()) fail(field, "expected a non-empty array of number rows");
  if (v.front().is_number()) {  // flat array: a single column
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(field, "expected numbers");
      m(static_cast<Eigen::Index>(i), 0) = v[i].get<double>();
    }
    return m;
  }
  const std::size_t cols = v.front().is_array() ? v.front().size() : 0;
  if (cols == 0) fail(field, "expected a rectangular array of number rows");
  Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& row = v[i];
    if (!row.is_array() || row.size() != cols) fail(field, "rows must have equal length");
    for (std::size_t j = 0; j < cols; ++j) {
      if (!row[j].is_number()) fail(field, "expected numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j].get<double>();
    }
  }
  return m;
}

SystemSpec parse_system(const json& obj) {
  SystemSpec spec;
  if (!obj.is_object()) fail("system", "expected an object");
  require_known_keys(obj, "system", {"type", "n", "c", "horizon", "scheme", "a", "b", "h"});
  spec.type = string_or(obj, "type", "system", "heat1d");
  spec.horizon = number_or(obj, "horizon", "system", 1.0);
  if (spec.type == "heat1d") {
    spec.n = static_cast<int>(integer_or(obj, "n", "system", 10));
    spec.c = number_or(obj, "c", "system", 1.0);
    const std::string scheme = string_or(obj, "scheme", "system", "eliminated");
    spec.scheme = scheme_from_string(scheme);
    if (obj.contains("a") || obj.contains("b") || obj.contains("h")) {
      fail("system", "a/b/h apply to the dense type only");
    }
  } else if (spec.type == "dense") {
    if (!obj.contains("a") || !obj.contains("b")) fail("system", "dense type needs a and b");
    spec.a = parse_matrix(obj.at("a"), "system.a");
    spec.b = parse_matrix(obj.at("b"), "system.b");
    spec.h = number_or(obj, "h", "system", 0.5);
    if (obj.contains("n") || obj.contains("c") || obj.contains("scheme")) {
      fail("system", "n/c/scheme apply to the heat1d type only");
    }
  } else {
    fail("system.type", "expected 'heat1d' or 'dense', got '" + spec.type + "'");
  }
  return spec;
}

DualParameters parse_dual(const json* obj) {
  double p = 1.2;
  double beta = 0.16;
  int quad = 64;
  std::optional<double> q;
  double gamma = 0.75;
  double s = 2.0;
  double theta = 0.32;
  bool penalty = true;
  if (obj != nullptr) {
    if (!obj->is_object()) fail("dual", "expected an object");
    require_known_keys(*obj, "dual",
                       {"p", "q", "beta", "gamma", "s", "theta", "quad_nodes", "penalty"});
    p = number_or(*obj, "p", "dual", p);
    beta = number_or(*obj, "beta", "dual", beta);
    quad = static_cast<int>(integer_or(*obj, "quad_nodes", "dual", quad));
    gamma = number_or(*obj, "gamma", "dual", gamma);
    s = number_or(*obj, "s", "dual", s);
    theta = number_or(*obj, "theta", "dual", theta);
    penalty = boolean_or(*obj, "penalty", "dual", penalty);
    if (obj->contains("q")) q = number_or(*obj, "q", "dual", 0.0);
  }
  return make_dual_parameters(p, beta, quad, q, gamma, s, theta, penalty);
}

OptimizerConfig parse_optimizer(const json* obj) {
  OptimizerConfig config;
  if (obj != nullptr) {
    if (!obj->is_object()) fail("optimizer", "expected an object");
    require_known_keys(*obj, "optimizer",
                       {"method", "step", "grad_tol", "max_iters", "trace_every"});
    config.method =
        optim_method_from_string(string_or(*obj, "method", "optimizer", "adaptive-gradient"));
    config.step = number_or(*obj, "step", "optimizer", config.step);
    config.grad_tol = number_or(*obj, "grad_tol", "optimizer", config.grad_tol);
    config.max_iters = integer_or(*obj, "max_iters", "optimizer", config.max_iters);
    config.trace_every = integer_or(*obj, "trace_every", "optimizer", config.trace_every);
  }
  validate_optimizer_config(config);
  return config;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw std::invalid_argument("config: document must be a JSON object");
  }
  require_known_keys(doc, "", {"system", "y0", "dual", "optimizer", "out", "seed"});

  ExperimentConfig config;
  if (doc.contains("system")) config.system = parse_system(doc.at("system"));
  config.dual = parse_dual(doc.contains("dual") ? &doc.at("dual") : nullptr);
  config.optimizer = parse_optimizer(doc.contains("optimizer") ? &doc.at("optimizer") : nullptr);

  if (doc.contains("y0")) {
    const auto& y0 = doc.at("y0");
    if (y0.is_string()) {
      config.y0_expr = y0.get<std::string>();
    } else if (y0.is_array()) {
      config.y0_raw.resize(static_cast<Eigen::Index>(y0.size()));
      for (std::size_t i = 0; i < y0.size(); ++i) {
        if (!y0[i].is_number()) fail("y0", "expected numbers");
        config.y0_raw(static_cast<Eigen::Index>(i)) = y0[i].get<double>();
      }
    } else {
      fail("y0", "expected an expression string or an array of numbers");
    }
  }

  config.out = string_or(doc, "out", "config", config.out);
  if (config.out.empty()) fail("out", "must be a non-empty path");
  if (doc.contains("seed")) {
    const auto& v = doc.at("seed");
    if (!v.is_number_unsigned() && !v.is_number_integer()) fail("seed", "expected an integer");
    const auto s = v.get<long long>();
    if (s < 0) fail("seed", "must be non-negative");
    config.seed = static_cast<std::uint64_t>(s);
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("config: cannot open '" + path.string() + "'");
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& err) {
    throw std::invalid_argument("config: invalid JSON in '" + path.string() + "': " + err.what());
  }
  return parse_config(doc);
}

nlohmann::json config_to_json(const ExperimentConfig& config) {
  json doc;
  json system;
  system["type"] = config.system.type;
  system["horizon"] = config.system.horizon;
  if (config.system.type == "heat1d") {
    system["n"] = config.system.n;
    system["c"] = config.system.c;
    system["scheme"] = to_string(config.system.scheme);
  } else {
    system["h"] = config.system.h;
    json a = json::array();
    for (Eigen::Index i = 0; i < config.system.a.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < config.system.a.cols(); ++j) row.push_back(config.system.a(i, j));
      a.push_back(std::move(row));
    }
    system["a"] = std::move(a);
    json b = json::array();
    for (Eigen::Index i = 0; i < config.system.b.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < config.system.b.cols(); ++j) row.push_back(config.system.b(i, j));
      b.push_back(std::move(row));
    }
    system["b"] = std::move(b);
  }
  doc["system"] = std::move(system);

  if (config.y0_raw.size() > 0) {
    json y0 = json::array();
    for (Eigen::Index i = 0; i < config.y0_raw.size(); ++i) y0.push_back(config.y0_raw(i));
    doc["y0"] = std::move(y0);
  } else {
    doc["y0"] = config.y0_expr;
  }

  doc["dual"] = {{"p", config.dual.p},           {"q", config.dual.q},
                 {"beta", config.dual.beta},     {"gamma", config.dual.gamma},
                 {"s", config.dual.s},           {"theta", config.dual.theta},
                 {"quad_nodes", config.dual.quad_nodes}, {"penalty", config.dual.penalty}};
  doc["optimizer"] = {{"method", to_string(config.optimizer.method)},
                      {"step", config.optimizer.step},
                      {"grad_tol", config.optimizer.grad_tol},
                      {"max_iters", config.optimizer.max_iters},
                      {"trace_every", config.optimizer.trace_every}};
  doc["out"] = config.out;
  doc["seed"] = config.seed;
  return doc;
}

SemidiscreteSystem build_system(const SystemSpec& spec) {
  if (spec.type == "heat1d") {
    return build_heat1d(spec.n, spec.c, spec.horizon, spec.scheme);
  }
  return make_system(spec.a, spec.b, spec.h, spec.horizon);
}

InitialData build_initial(const SemidiscreteSystem& system, const ExperimentConfig& config) {
  if (config.y0_raw.size() > 0) {
    return raw_initial(system, config.y0_raw);
  }
  const std::string& expr = config.y0_expr;
  if (expr == "exp(-x^2)") {
    return sample_initial(system, [](double x) { return std::exp(-x * x); });
  }
  if (expr == "sin(pi x)" || expr == "sin(pi*x)") {
    return sample_initial(system, [](double x) { return std::sin(3.14159265358979323846 * x); });
  }
  if (expr == "ones") {
    return sample_initial(system, [](double) { return 1.0; });
  }
  if (expr == "zero") {
    return sample_initial(system, [](double) { return 0.0; });
  }
  throw std::invalid_argument(
      "y0: unsupported expression '" + expr +
      "' (supported: exp(-x^2), sin(pi x), ones, zero, or an explicit array)");
}

void write_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest) {
  json doc;
  doc["toolkit"] = "nullctl";
  doc["version"] = kToolkitVersion;
  doc["command"] = manifest.command;
  doc["generated_at"] = utc_timestamp();
  doc["config"] = manifest.config;
  json outputs = json::array();
  for (const auto& rel : manifest.outputs) {
    const auto path = out_dir / rel;
    if (!std::filesystem::exists(path)) {
      throw std::runtime_error("manifest: output file '" + rel + "' does not exist");
    }
    outputs.push_back(rel);
  }
  doc["outputs"] = std::move(outputs);
  doc["metrics"] = manifest.metrics;
  if (!manifest.notes.empty()) doc["notes"] = manifest.notes;

  std::ofstream out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("manifest: cannot open manifest.json for writing");
  }
  out << doc.dump(2) << '\n';
  if (!out) {
    throw std::runtime_error("manifest: short write");
  }
}

}  // namespace nullctl
