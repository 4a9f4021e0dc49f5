#include "fsmle/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fsmle/design.hpp"
#include "fsmle/laws.hpp"

namespace fsmle {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

const json& need(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(path + "." + key, "missing");
  return *it;
}

void reject_unknown(const json& obj,
                    std::initializer_list<const char*> allowed,
                    const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) known = true;
    if (!known) fail(path + "." + item.key(), "unknown key");
  }
}

double as_num(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<int>();
}

std::uint64_t as_seed(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<double>() < 0)
    fail(path, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::string as_str(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

VectorXd as_vector(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a nonempty array");
  VectorXd out(static_cast<long>(v.size()));
  long i = 0;
  for (const auto& e : v) {
    if (!e.is_number()) fail(path, "expected an array of numbers");
    out[i++] = e.get<double>();
  }
  return out;
}

LawPtr parse_law(const json& v, const std::string& path) {
  reject_unknown(v, {"law", "mu", "sigma", "scale", "df"}, path);
  const std::string name = as_str(need(v, "law", path), path + ".law");
  const double mu =
      v.contains("mu") ? as_num(v["mu"], path + ".mu") : 0.0;
  if (name == "normal") {
    const double sigma =
        v.contains("sigma") ? as_num(v["sigma"], path + ".sigma") : 1.0;
    if (sigma <= 0.0) fail(path + ".sigma", "must be positive");
    return make_normal_law(mu, sigma);
  }
  const double scale =
      v.contains("scale") ? as_num(v["scale"], path + ".scale") : 1.0;
  if (scale <= 0.0) fail(path + ".scale", "must be positive");
  if (name == "laplace") return make_laplace_law(mu, scale);
  if (name == "student_t") {
    const double df = as_num(need(v, "df", path), path + ".df");
    if (df <= 2.0) fail(path + ".df", "must exceed 2 for a finite variance");
    return make_student_t_law(mu, scale, df);
  }
  fail(path + ".law",
       "unknown law '" + name + "' (normal, laplace, student_t)");
}

TruthSpec parse_truth(const json& v, const std::string& path, int n_means,
                      int p) {
  const std::string type = as_str(need(v, "type", path), path + ".type");
  if (type == "in_family") {
    reject_unknown(v, {"type", "theta"}, path);
    VectorXd theta = as_vector(need(v, "theta", path), path + ".theta");
    if (theta.size() != p)
      fail(path + ".theta",
           "expected length " + std::to_string(p));
    return TruthSpec::in_family(std::move(theta));
  }
  if (type == "custom_mean") {
    reject_unknown(v, {"type", "means", "constant_mean", "residual"}, path);
    VectorXd means;
    if (v.contains("means")) {
      means = as_vector(v["means"], path + ".means");
    } else if (v.contains("constant_mean")) {
      means = VectorXd::Constant(
          n_means, as_num(v["constant_mean"], path + ".constant_mean"));
    } else {
      fail(path, "custom_mean needs either means or constant_mean");
    }
    if (means.size() != n_means)
      fail(path + ".means", "expected length " + std::to_string(n_means));
    LawPtr residual = v.contains("residual")
                          ? parse_law(v["residual"], path + ".residual")
                          : nullptr;
    return TruthSpec::custom_mean(std::move(means), std::move(residual));
  }
  if (type == "contaminated") {
    reject_unknown(v, {"type", "base", "fraction", "contaminant"}, path);
    TruthSpec base =
        parse_truth(need(v, "base", path), path + ".base", n_means, p);
    const double fraction =
        as_num(need(v, "fraction", path), path + ".fraction");
    if (fraction < 0.0 || fraction > 1.0)
      fail(path + ".fraction", "must lie in [0, 1]");
    return TruthSpec::contaminated(
        std::move(base), fraction,
        parse_law(need(v, "contaminant", path), path + ".contaminant"));
  }
  fail(path + ".type",
       "unknown truth type '" + type +
           "' (in_family, custom_mean, contaminated)");
}

Design parse_design(const json& v, int n, int p, const std::string& path) {
  if (v.is_object() && v.contains("csv")) {
    reject_unknown(v, {"csv"}, path);
    Design d = load_design_csv(as_str(v["csv"], path + ".csv"));
    if (d.n() != n || d.p() != p)
      fail(path + ".csv", "dimensions " + std::to_string(d.n()) + "x" +
                              std::to_string(d.p()) +
                              " do not match model.n x model.p");
    return d;
  }
  reject_unknown(v, {"generator", "seed"}, path);
  const std::string gen =
      as_str(need(v, "generator", path), path + ".generator");
  if (gen == "orthonormal") return make_orthonormal_design(n, p);
  if (gen == "normal") {
    const std::uint64_t seed =
        v.contains("seed") ? as_seed(v["seed"], path + ".seed") : 1;
    return make_normal_design(n, p, seed);
  }
  fail(path + ".generator",
       "unknown generator '" + gen + "' (normal, orthonormal)");
}

GlmKind parse_kind(const json& v, const std::string& path) {
  const std::string kind = as_str(v, path);
  if (kind == "logistic") return GlmKind::Logistic;
  if (kind == "poisson") return GlmKind::Poisson;
  if (kind == "exponential") return GlmKind::Exponential;
  if (kind == "gaussian") return GlmKind::Gaussian;
  fail(path, "unknown kind '" + kind +
                 "' (logistic, poisson, exponential, gaussian)");
}

Model parse_model(const json& v, const std::string& path) {
  const std::string cls = as_str(need(v, "class", path), path + ".class");
  if (cls == "iid") {
    reject_unknown(v, {"class", "n", "truth"}, path);
    const int n = as_int(need(v, "n", path), path + ".n");
    if (n < 3) fail(path + ".n", "must be at least 3");
    // The i.i.d. gaussian family has the two parameters location and
    // log-scale; a custom truth carries a single shared mean.
    return build_iid_gaussian(
        n, parse_truth(need(v, "truth", path), path + ".truth", 1, 2));
  }
  const int n = as_int(need(v, "n", path), path + ".n");
  const int p = as_int(need(v, "p", path), path + ".p");
  if (p < 1) fail(path + ".p", "must be positive");
  if (n <= p) fail(path + ".n", "must exceed model.p");
  Design design = parse_design(need(v, "design", path), n, p, path + ".design");
  TruthSpec truth =
      parse_truth(need(v, "truth", path), path + ".truth", n, p);
  if (cls == "lad") {
    reject_unknown(v, {"class", "n", "p", "design", "truth"}, path);
    return build_lad(design, truth);
  }
  if (cls == "glm") {
    reject_unknown(v, {"class", "kind", "n", "p", "design", "truth", "scale"},
                   path);
    const GlmKind kind = parse_kind(need(v, "kind", path), path + ".kind");
    VectorXd scale;
    if (v.contains("scale")) {
      const json& s = v["scale"];
      if (s.is_number()) {
        const double val = as_num(s, path + ".scale");
        if (val <= 0.0) fail(path + ".scale", "must be positive");
        scale = VectorXd::Constant(n, val);
      } else {
        scale = as_vector(s, path + ".scale");
        if (scale.size() != n)
          fail(path + ".scale", "expected length " + std::to_string(n));
        if (scale.minCoeff() <= 0.0)
          fail(path + ".scale", "entries must be positive");
      }
    }
    return build_glm(design, kind, truth, scale);
  }
  fail(path + ".class", "unknown class '" + cls + "' (glm, iid, lad)");
}

void parse_run(const json& v, Scenario& sc, const std::string& path) {
  reject_unknown(
      v, {"seed", "replications", "x_levels", "r", "grid", "workers"}, path);
  sc.master_seed = as_seed(need(v, "seed", path), path + ".seed");
  sc.replications =
      as_int(need(v, "replications", path), path + ".replications");
  if (sc.replications < 100)
    fail(path + ".replications", "must be at least 100");
  if (v.contains("x_levels")) {
    VectorXd levels = as_vector(v["x_levels"], path + ".x_levels");
    if (levels.minCoeff() <= 0.0)
      fail(path + ".x_levels", "levels must be positive");
    sc.x_levels.assign(levels.data(), levels.data() + levels.size());
  }
  if (v.contains("r")) {
    const json& r = v["r"];
    if (r.is_string()) {
      if (r.get<std::string>() != "auto")
        fail(path + ".r", "expected a positive number or \"auto\"");
      sc.r = 0.0;
    } else {
      sc.r = as_num(r, path + ".r");
      if (sc.r <= 0.0) fail(path + ".r", "must be positive (or \"auto\")");
    }
  }
  if (v.contains("grid")) {
    const json& g = v["grid"];
    reject_unknown(g, {"directions", "radii"}, path + ".grid");
    if (g.contains("directions")) {
      sc.grid.directions =
          as_int(g["directions"], path + ".grid.directions");
      if (sc.grid.directions < 4)
        fail(path + ".grid.directions", "must be at least 4");
    }
    if (g.contains("radii")) {
      sc.grid.radii = as_int(g["radii"], path + ".grid.radii");
      if (sc.grid.radii < 1) fail(path + ".grid.radii", "must be at least 1");
    }
  }
  if (v.contains("workers")) {
    sc.workers = as_int(v["workers"], path + ".workers");
    if (sc.workers < 0) fail(path + ".workers", "must be nonnegative");
  }
}

OutputSpec parse_output(const json& v, const std::string& path) {
  OutputSpec out;
  reject_unknown(v, {"directory", "formats"}, path);
  if (v.contains("directory"))
    out.directory = as_str(v["directory"], path + ".directory");
  if (v.contains("formats")) {
    const json& f = v["formats"];
    if (!f.is_array() || f.empty())
      fail(path + ".formats", "expected a nonempty array");
    out.csv = out.json = false;
    for (const auto& e : f) {
      const std::string fmt = as_str(e, path + ".formats");
      if (fmt == "csv")
        out.csv = true;
      else if (fmt == "json")
        out.json = true;
      else
        fail(path + ".formats", "unknown format '" + fmt + "' (csv, json)");
    }
  }
  return out;
}

}  // namespace

Config parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  reject_unknown(doc, {"model", "run", "output"}, "config");
  Config cfg;
  cfg.scenario.model = parse_model(need(doc, "model", "config"), "model");
  parse_run(need(doc, "run", "config"), cfg.scenario, "run");
  if (doc.contains("output"))
    cfg.output = parse_output(doc["output"], "output");

  // Canonical echo: the validated blocks with defaults made explicit, minus
  // execution knobs (worker count) so reruns stay byte-identical.
  json echo;
  echo["model"] = doc["model"];
  json run;
  run["seed"] = cfg.scenario.master_seed;
  run["replications"] = cfg.scenario.replications;
  run["x_levels"] = cfg.scenario.x_levels;
  run["r"] = cfg.scenario.r > 0.0 ? json(cfg.scenario.r) : json("auto");
  run["grid"] = {{"directions", cfg.scenario.grid.directions},
                 {"radii", cfg.scenario.grid.radii}};
  echo["run"] = run;
  json out;
  out["directory"] = cfg.output.directory;
  json formats = json::array();
  if (cfg.output.csv) formats.push_back("csv");
  if (cfg.output.json) formats.push_back("json");
  out["formats"] = formats;
  echo["output"] = out;
  cfg.echo = echo.dump();
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace fsmle
