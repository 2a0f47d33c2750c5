#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "thicken/thicken.hpp"

using namespace thicken;

namespace {

struct Flags {
  std::map<std::string, std::string> values;
  std::string out;
  std::string csv;
  std::string input;
  std::string lo = "0";
  std::string spec_file;
  std::string experiment;
  std::string coords;
};

const char* kFlagNames[] = {"p", "pprime", "lambda", "lambdaprime", "epsilon", "delta", "samples", "seed", "max-level"};

void add_common(CLI::App* sub, Flags& f) {
  for (const char* name : kFlagNames) sub->add_option(std::string("--") + name, f.values[name]);
  sub->add_option("--out", f.out, "write the JSON report here");
  sub->add_option("--csv", f.csv, "dump per-run rows as CSV");
}

void write_json(const nlohmann::ordered_json& j, const Flags& f) {
  std::cout << j.dump(2) << "\n";
  if (!f.out.empty()) {
    std::ofstream o(f.out);
    if (!o) throw ConfigError(0, "cannot write '" + f.out + "'");
    o << j.dump(2) << "\n";
  }
}

lab::ExperimentSpec spec_from_flags(const std::string& name, const Flags& f) {
  auto spec = lab::ExperimentSpec::make(name);
  for (const auto& [k, v] : f.values)
    if (!v.empty()) spec.set(k, v);
  return spec;
}

int run_report(const lab::ExperimentSpec& spec, const Flags& f) {
  std::unique_ptr<std::ofstream> csv;
  if (!f.csv.empty()) {
    csv = std::make_unique<std::ofstream>(f.csv);
    if (!*csv) throw ConfigError(0, "cannot write '" + f.csv + "'");
  }
  lab::ExperimentReport rep = lab::run_spec(spec, csv.get());
  write_json(rep.to_json(), f);
  for (const auto& [name, ok] : rep.criteria) std::cerr << (ok ? "PASS " : "FAIL ") << rep.id << ": " << name << "\n";
  return rep.passed() ? 0 : 1;
}

Rational flag_rational(const Flags& f, const std::string& key, const Rational& fallback) {
  const std::string& v = f.values.at(key);
  if (v.empty()) return fallback;
  try {
    return Rational::parse(v);
  } catch (const InvalidArgument& e) {
    throw ConfigError(0, "--" + key + ": " + e.what());
  }
}

std::uint64_t flag_seed(const Flags& f) {
  auto spec = spec_from_flags("seed", f);
  return spec.integer("seed", 42);
}

// A fixed input window: output JSON {config, seed, coords, values, certificate}.
int thicken_window(const Flags& f) {
  ThickenConfig cfg;
  cfg.p = flag_rational(f, "p", Rational(1, 2));
  cfg.p_prime = flag_rational(f, "pprime", Rational(3, 4));
  cfg.delta = flag_rational(f, "delta", Rational(1, 32));
  cfg.max_level = spec_from_flags("thicken", f).integer("max_level", 0);
  cfg.validate();
  SequenceWindow w;
  try {
    w.lo = std::stoll(f.lo);
  } catch (const std::exception&) {
    throw ConfigError(0, "--lo: expected an integer");
  }
  w.bits = BitStream::parse_bits(f.input);
  const std::uint64_t seed = flag_seed(f);
  SequenceResult r = thicken_sequence(w, seed, cfg);
  nlohmann::ordered_json coords = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < w.bits.size(); ++k) coords.push_back(w.lo + static_cast<std::int64_t>(k));
  nlohmann::ordered_json j;
  j["config"] = {{"p", cfg.p.str()}, {"pprime", cfg.p_prime.str()}, {"delta", cfg.delta.str()},
                 {"max_level", cfg.effective_max_level()}};
  j["seed"] = seed;
  j["coords"] = coords;
  j["input"] = w.str();
  j["values"] = r.output.str();
  j["certificate"] = certificate_json(r.certificate);
  write_json(j, f);
  return 0;
}

// A fixed PointWindow read from a JSON file.
int thicken_poisson_window(const Flags& f) {
  std::ifstream in(f.input);
  if (!in) throw ConfigError(0, "cannot read '" + f.input + "'");
  nlohmann::json raw;
  try {
    in >> raw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(0, std::string("input window: ") + e.what());
  }
  PointWindow x = PointWindow::from_json(raw);
  PoissonConfig cfg;
  cfg.max_level = spec_from_flags("thicken-poisson", f).integer("max_level", 0);
  const std::uint64_t seed = flag_seed(f);
  PoissonResult r = thicken_poisson(x, flag_rational(f, "lambda", x.intensity), flag_rational(f, "lambdaprime", Rational(2)),
                                    flag_rational(f, "delta", Rational(1, 32)), seed, cfg);
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["input"] = r.input.to_json();
  j["output"] = r.output.to_json();
  j["certificate"] = certificate_json(r.certificate);
  write_json(j, f);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thickening of Bernoulli and Poisson processes"};
  app.require_subcommand(1);
  Flags f;
  struct Sub {
    const char* command;
    const char* experiment;
    const char* help;
  };
  const Sub subs[] = {
      {"extract", "extract", "Monte Carlo fairness of the epsilon-extractor"},
      {"correct", "corrector-rate", "corrector firing rate"},
      {"thicken", "thicken", "Bernoulli thickening experiment, or one window with --input"},
      {"thicken-poisson", "thicken-poisson", "Poisson thickening experiment, or one window with --input"},
      {"search-no-extractor", "no-extractor", "exhaustive search for exact extractors on small windows"},
      {"distinguish", "distinguish", "event E on the unit-offset candidate versus the true process"},
      {"calibrate", "calibrate", "calibration and power of the statistical tests"},
  };
  std::map<CLI::App*, std::string> experiment_of;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.command, s.help);
    add_common(sub, f);
    experiment_of[sub] = s.experiment;
    if (std::string(s.command) == "thicken") {
      sub->add_option("--input", f.input, "input window as a 0/1 string");
      sub->add_option("--lo", f.lo, "Z index of the first input bit");
      sub->add_option("--coords", f.coords, "number of coordinates in the experiment prefix");
    }
    if (std::string(s.command) == "thicken-poisson") sub->add_option("--input", f.input, "PointWindow JSON file");
  }
  CLI::App* run = app.add_subcommand("run", "run an experiment spec file");
  run->add_option("spec", f.spec_file, "spec file")->required();
  run->add_option("--out", f.out, "write the JSON report here");
  run->add_option("--csv", f.csv, "dump per-run rows as CSV");
  CLI::App* exp = app.add_subcommand("experiment", "run a named experiment with default settings");
  exp->add_option("name", f.experiment, "experiment name")->required();
  add_common(exp, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      std::ifstream in(f.spec_file);
      if (!in) throw ConfigError(0, "cannot read spec file '" + f.spec_file + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      return run_report(lab::ExperimentSpec::parse(ss.str()), f);
    }
    if (exp->parsed()) return run_report(spec_from_flags(f.experiment, f), f);
    for (const auto& [sub, name] : experiment_of) {
      if (!sub->parsed()) continue;
      if (!f.input.empty() && name == "thicken") return thicken_window(f);
      if (!f.input.empty() && name == "thicken-poisson") return thicken_poisson_window(f);
      auto spec = spec_from_flags(name, f);
      if (!f.coords.empty()) spec.set("coords", f.coords);
      return run_report(spec, f);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
