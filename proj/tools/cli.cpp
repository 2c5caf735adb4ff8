#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tvae/agent.hpp"
#include "tvae/errors.hpp"
#include "tvae/failure_forge.hpp"
#include "tvae/grpo.hpp"
#include "tvae/jsonl.hpp"
#include "tvae/metrics.hpp"
#include "tvae/score.hpp"
#include "tvae/sim.hpp"
#include "tvae/trajectory.hpp"

#ifndef TVAE_VERSION
#define TVAE_VERSION "dev"
#endif

namespace tvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolName = "tvae-harness";

// Resolves every setting as flag > --config > default and records the
// effective value for the manifest.
class Settings {
 public:
  void load(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw DataError("config " + path + ": " + e.what());
    }
    // A run manifest is accepted as a config: its "config" block is the base layer.
    if (j.is_object() && j.contains("tool") && j.contains("config")) j = j["config"];
    if (!j.is_object()) throw DataError("config " + path + " must be a JSON object");
    base_ = std::move(j);
  }

  template <class T>
  T get(const CLI::Option* opt, const T& flag, const std::string& key, const T& fallback) {
    T v = fallback;
    if (opt->count() > 0) {
      v = flag;
    } else if (base_.contains(key)) {
      try {
        v = base_[key].get<T>();
      } catch (const json::exception& e) {
        throw DataError("config key '" + key + "': " + e.what());
      }
    }
    effective_[key] = v;
    return v;
  }

  std::uint64_t seed(const CLI::Option* opt, std::uint64_t flag) {
    std::uint64_t v = 0;
    if (opt->count() > 0) {
      v = flag;
    } else if (base_.contains("seed")) {
      v = base_["seed"].get<std::uint64_t>();
    } else if (const char* env = std::getenv("TVAE_SEED"); env != nullptr && *env != '\0') {
      try {
        std::size_t used = 0;
        v = std::stoull(env, &used);
        if (env[used] != '\0') throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError(std::string("TVAE_SEED is not an unsigned integer: ") + env);
      }
    }
    effective_["seed"] = v;
    return v;
  }

  /// Config keys that no setting consumed are almost always typos.
  void reject_unknown() const {
    for (const auto& [k, _] : base_.items())
      if (!effective_.contains(k)) throw DataError("unknown config key '" + k + "'");
  }

  const json& effective() const { return effective_; }

 private:
  json base_ = json::object();
  json effective_ = json::object();
};

void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << bytes;
    if (!f.flush()) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

template <class T, class F>
std::string jsonl(const std::vector<T>& items, F&& to_json) {
  std::string s;
  for (const auto& x : items) {
    s += to_json(x).dump();
    s += '\n';
  }
  return s;
}

TextMatch parse_text_match(const std::string& s) {
  if (s == "exact") return {};
  if (s.rfind("f1:", 0) == 0) {
    try {
      std::size_t used = 0;
      const double t = std::stod(s.substr(3), &used);
      if (used == s.size() - 3) return {TextMatchMode::TokenF1Threshold, t};
    } catch (const std::exception&) {
    }
  }
  throw std::invalid_argument("text match must be 'exact' or 'f1:<threshold>', got '" + s + "'");
}

FailureWeights parse_weights(const std::vector<double>& v) {
  if (v.size() != kFailureModeCount) throw std::invalid_argument("weights need exactly 5 values");
  FailureWeights w;
  for (std::size_t i = 0; i < kFailureModeCount; ++i) w.w[i] = v[i];
  w.validate();
  return w;
}

std::vector<double> split_numbers(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::invalid_argument("bad number '" + item + "' in list");
    }
  }
  return out;
}

std::vector<TrajectoryRecord> load_checked(const std::string& path, std::size_t limit, bool skip_invalid,
                                           std::ostream& err) {
  if (path.empty()) throw DataError("no dataset given");
  LoadOptions opts;
  if (limit > 0) opts.limit = limit;
  opts.skip_invalid = skip_invalid;
  opts.on_skip = [&err](const std::string& why) { err << "skipped: " << why << '\n'; };
  auto trajs = load_dataset(path, opts);
  if (trajs.empty()) throw EmptyDataset();
  return trajs;
}

json manifest(const std::string& command, const Settings& s, const json& extra) {
  json m;
  m["tool"] = kToolName;
  m["version"] = TVAE_VERSION;
  m["command"] = command;
  m["config"] = s.effective();
  m["seed"] = s.effective().value("seed", std::uint64_t{0});
  for (const auto& [k, v] : extra.items()) m[k] = v;
  return m;
}

// Writes outputs (name -> bytes) and then the manifest, which lists each
// output's digest. The manifest is the last file to appear.
void publish(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& files, json m) {
  fs::create_directories(dir);
  json digests = json::object();
  for (const auto& [name, bytes] : files) {
    write_atomic(dir / name, bytes);
    digests[name] = file_digest(dir / name);
  }
  m["outputs"] = std::move(digests);
  write_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<std::pair<std::string, std::string>> report_files(const MetricsReport& r) {
  return {{"report.json", emit_report(r, ReportFormat::Json)},
          {"report.csv", emit_report(r, ReportFormat::Csv)},
          {"report.md", emit_report(r, ReportFormat::Markdown)}};
}

struct AgentFlags {
  std::string agent;
  std::string templates;
  double timeout = 30.0;
  std::size_t max_in_flight = 1;
  std::string bearer_token;
  CLI::Option* o_agent = nullptr;
  CLI::Option* o_templates = nullptr;
  CLI::Option* o_timeout = nullptr;
  CLI::Option* o_in_flight = nullptr;

  void add(CLI::App* app) {
    o_agent = app->add_option("--agent", agent, "scripted:<variant>, remote:http://host:port/turn or stdio:<command>");
    o_templates = app->add_option("--templates", templates, "Prompt template directory");
    o_timeout = app->add_option("--timeout", timeout, "Per-turn agent timeout in seconds");
    o_in_flight = app->add_option("--max-in-flight", max_in_flight, "Concurrent requests allowed to a remote agent");
    app->add_option("--bearer-token", bearer_token, "Bearer token for remote agents (never recorded)")
        ->envname("TVAE_BEARER_TOKEN");
  }

  std::unique_ptr<Agent> build(Settings& s, const ForgeConfig& forge) {
    const std::string spec = s.get(o_agent, agent, "agent", std::string("scripted:oracle"));
    const std::string tdir = s.get(o_templates, templates, "templates", std::string());
    AgentOptions opts;
    opts.templates = tdir.empty() ? PromptTemplates::defaults() : PromptTemplates::load(tdir);
    opts.forge = forge;
    opts.timeout_seconds = s.get(o_timeout, timeout, "timeout", 30.0);
    opts.max_in_flight = s.get(o_in_flight, max_in_flight, "max_in_flight", std::size_t{1});
    if (!(opts.timeout_seconds > 0.0)) throw std::invalid_argument("timeout must be positive");
    if (!bearer_token.empty()) opts.bearer_token = bearer_token;
    return make_agent(spec, opts);
  }
};

struct MatchFlags {
  double delta = 0.14;
  double repeat_epsilon = 0.04;
  std::string text_match = "exact";
  CLI::Option* o_delta = nullptr;
  CLI::Option* o_eps = nullptr;
  CLI::Option* o_text = nullptr;

  void add(CLI::App* app, bool with_repeat) {
    o_delta = app->add_option("--delta", delta, "Match distance threshold when no bbox is known");
    if (with_repeat) o_eps = app->add_option("--repeat-epsilon", repeat_epsilon, "Distance under which an action repeats");
    o_text = app->add_option("--text-match", text_match, "exact or f1:<threshold>");
  }

  SimConfig resolve(Settings& s) {
    SimConfig c;
    c.delta = s.get(o_delta, delta, "delta", 0.14);
    if (o_eps) c.repeat_epsilon = s.get(o_eps, repeat_epsilon, "repeat_epsilon", 0.04);
    c.text_match = parse_text_match(s.get(o_text, text_match, "text_match", std::string("exact")));
    return c;
  }
};

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
  CLI::Option* o_seed = nullptr;

  void add(CLI::App* app, bool needs_out) {
    app->add_option("--config", config, "JSON config (or a run manifest) used as the base layer");
    auto* o = app->add_option("--out", out, "Output directory");
    if (needs_out) o->required();
    o_seed = app->add_option("--seed", seed, "Seed; falls back to TVAE_SEED");
    app->add_option("--threads", threads, "Worker threads (0 = OpenMP default)");
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pseudo-online evaluation and reward harness for verification-driven GUI agents", kToolName};
  app.require_subcommand(1);
  app.set_version_flag("--version", TVAE_VERSION);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Replay trajectories against an agent and report task metrics");
  Common sim_c;
  AgentFlags sim_a;
  MatchFlags sim_m;
  std::string sim_dataset, sim_step_eval = "teacher-forced";
  std::size_t sim_reps = 1, sim_limit = 0;
  double sim_budget = 2.0;
  bool sim_skip = false;
  sim_c.add(sim, true);
  sim_a.add(sim);
  sim_m.add(sim, true);
  auto* o_sim_dataset = sim->add_option("--dataset", sim_dataset, "Trajectory JSONL");
  auto* o_sim_reps = sim->add_option("--replicates", sim_reps, "Episodes per trajectory");
  auto* o_sim_limit = sim->add_option("--limit", sim_limit, "Load at most this many trajectories (0 = all)");
  auto* o_sim_budget = sim->add_option("--budget-multiplier", sim_budget, "Step budget as a multiple of T");
  auto* o_sim_skip = sim->add_flag("--skip-invalid", sim_skip, "Drop invalid trajectories instead of failing");
  auto* o_sim_step = sim->add_option("--step-eval", sim_step_eval, "teacher-forced, attempts or none");

  // bench-robust
  auto* br = app.add_subcommand("bench-robust", "Evaluate loop rate and recovery on failure cases");
  Common br_c;
  AgentFlags br_a;
  MatchFlags br_m;
  std::string br_cases, br_dataset, br_weights;
  bool br_synth = false, br_skip = false;
  std::size_t br_per = 1;
  br_c.add(br, true);
  br_a.add(br);
  br_m.add(br, true);
  auto* o_br_cases = br->add_option("--cases", br_cases, "Failure-case JSONL");
  auto* o_br_synth = br->add_flag("--synthesize", br_synth, "Build the cases from --dataset first");
  auto* o_br_dataset = br->add_option("--dataset", br_dataset, "Trajectory JSONL for --synthesize");
  auto* o_br_per = br->add_option("--per-traj", br_per, "Failure cases per trajectory");
  auto* o_br_weights = br->add_option("--weights", br_weights, "Five comma-separated failure-mode weights");
  auto* o_br_skip = br->add_flag("--skip-invalid", br_skip, "Drop invalid trajectories instead of failing");

  // synth
  auto* sy = app.add_subcommand("synth", "Build Type A / Type B training samples and failure cases");
  Common sy_c;
  MatchFlags sy_m;
  std::string sy_dataset, sy_weights;
  double sy_ratio = 0.3;
  std::size_t sy_robust = 0, sy_limit = 0;
  bool sy_skip = false;
  sy_c.add(sy, true);
  sy_m.add(sy, false);
  auto* o_sy_dataset = sy->add_option("--dataset", sy_dataset, "Trajectory JSONL");
  auto* o_sy_ratio = sy->add_option("--ratio-b", sy_ratio, "Fraction of steps that also get a Type B sample");
  auto* o_sy_robust = sy->add_option("--robust-per-traj", sy_robust, "Also write this many failure cases per trajectory");
  auto* o_sy_weights = sy->add_option("--weights", sy_weights, "Five comma-separated failure-mode weights");
  auto* o_sy_limit = sy->add_option("--limit", sy_limit, "Load at most this many trajectories (0 = all)");
  auto* o_sy_skip = sy->add_flag("--skip-invalid", sy_skip, "Drop invalid trajectories instead of failing");

  // score
  auto* sc = app.add_subcommand("score", "Score raw outputs against samples; optionally evaluate GRPO groups");
  Common sc_c;
  MatchFlags sc_m;
  std::string sc_samples, sc_outputs, sc_groups, sc_similarity = "token-f1", sc_kl = "k3";
  double sc_alpha = 0.5, sc_beta = 0.5, sc_eps_std = 1e-8, sc_eps_clip = 0.2, sc_lambda = 0.05;
  std::size_t sc_g = 6;
  sc_c.add(sc, true);
  sc_m.add(sc, false);
  auto* o_sc_samples = sc->add_option("--samples", sc_samples, "SyntheticSample JSONL");
  auto* o_sc_outputs = sc->add_option("--outputs", sc_outputs, "JSONL of {\"output\": raw text}, aligned with samples");
  auto* o_sc_groups = sc->add_option("--groups", sc_groups, "GroupBatch JSONL with token log-probs");
  auto* o_sc_alpha = sc->add_option("--alpha", sc_alpha, "Effect reward weight");
  auto* o_sc_beta = sc->add_option("--beta", sc_beta, "Verification reward weight");
  auto* o_sc_sim = sc->add_option("--similarity", sc_similarity, "Effect similarity: token-f1 or exact");
  auto* o_sc_g = sc->add_option("--group-size", sc_g, "Expected outputs per group");
  auto* o_sc_eps_std = sc->add_option("--eps-std", sc_eps_std, "Advantage denominator guard");
  auto* o_sc_eps_clip = sc->add_option("--eps-clip", sc_eps_clip, "Ratio clip range");
  auto* o_sc_lambda = sc->add_option("--kl-lambda", sc_lambda, "KL penalty weight");
  auto* o_sc_kl = sc->add_option("--kl-estimator", sc_kl, "k3 or exact");

  // report
  auto* rp = app.add_subcommand("report", "Compute or convert a metrics report");
  Common rp_c;
  MatchFlags rp_m;
  std::string rp_input, rp_traces, rp_results, rp_dataset, rp_format = "markdown";
  rp_c.add(rp, false);
  rp_m.add(rp, false);
  auto* o_rp_input = rp->add_option("--input", rp_input, "Existing report.json to convert");
  auto* o_rp_traces = rp->add_option("--traces", rp_traces, "SimTrace JSONL");
  auto* o_rp_results = rp->add_option("--results", rp_results, "Failure result JSONL");
  auto* o_rp_dataset = rp->add_option("--dataset", rp_dataset, "Trajectories, for step metrics over trace attempts");
  auto* o_rp_format = rp->add_option("--format", rp_format, "json, csv or markdown");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << TVAE_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    for (auto* sub : app.get_subcommands())
      if (sub->parsed()) err << sub->help();
    return kDataError;
  }

  try {
    if (sim->parsed()) {
      Settings s;
      s.load(sim_c.config);
      SimConfig cfg = sim_m.resolve(s);
      cfg.seed = s.seed(sim_c.o_seed, sim_c.seed);
      cfg.budget_multiplier = s.get(o_sim_budget, sim_budget, "budget_multiplier", 2.0);
      cfg.validate();
      const std::string dataset = s.get(o_sim_dataset, sim_dataset, "dataset", std::string());
      const auto reps = s.get(o_sim_reps, sim_reps, "replicates", std::size_t{1});
      const auto limit = s.get(o_sim_limit, sim_limit, "limit", std::size_t{0});
      const bool skip = s.get(o_sim_skip, sim_skip, "skip_invalid", false);
      const std::string step_eval = s.get(o_sim_step, sim_step_eval, "step_eval", std::string("teacher-forced"));
      if (step_eval != "teacher-forced" && step_eval != "attempts" && step_eval != "none")
        throw std::invalid_argument("step-eval must be teacher-forced, attempts or none");
      if (reps == 0) throw std::invalid_argument("replicates must be >= 1");
      ForgeConfig forge;
      forge.match = cfg.match();
      auto agent = sim_a.build(s, forge);
      s.reject_unknown();

      const auto trajs = load_checked(dataset, limit, skip, err);
      const auto jobs = make_jobs(trajs.size(), reps);
      const auto traces = run_episodes_parallel(trajs, jobs, *agent, cfg, sim_c.threads);
      MetricsReport rep;
      rep.task = task_metrics_parallel(traces, sim_c.threads);
      if (step_eval == "teacher-forced") {
        const auto preds = run_step_eval_parallel(trajs, *agent, cfg, sim_c.threads);
        rep.step = step_metrics_parallel(preds, cfg.match(), sim_c.threads);
      } else if (step_eval == "attempts") {
        rep.step = step_metrics_parallel(predictions_from_traces(trajs, traces), cfg.match(), sim_c.threads);
      }
      auto files = report_files(rep);
      files.insert(files.begin(), {"traces.jsonl", jsonl(traces, trace_to_json)});
      publish(sim_c.out, files,
              manifest("simulate", s, {{"dataset_hash", file_digest(dataset)}, {"agent", agent->identity()}}));
      out << emit_report(rep, ReportFormat::Markdown);
      return kOk;
    }

    if (br->parsed()) {
      Settings s;
      s.load(br_c.config);
      SimConfig cfg = br_m.resolve(s);
      cfg.seed = s.seed(br_c.o_seed, br_c.seed);
      cfg.validate();
      const bool synth = s.get(o_br_synth, br_synth, "synthesize", false);
      const std::string cases_path = s.get(o_br_cases, br_cases, "cases", std::string());
      const std::string dataset = s.get(o_br_dataset, br_dataset, "dataset", std::string());
      const auto per = s.get(o_br_per, br_per, "per_traj", std::size_t{1});
      const bool skip = s.get(o_br_skip, br_skip, "skip_invalid", false);
      ForgeConfig forge;
      forge.match = cfg.match();
      const auto defaults = std::vector<double>(forge.weights.w.begin(), forge.weights.w.end());
      forge.weights = parse_weights(
          s.get(o_br_weights, br_weights.empty() ? defaults : split_numbers(br_weights), "weights", defaults));
      auto agent = br_a.build(s, forge);
      s.reject_unknown();

      std::vector<FailureCase> cases;
      std::vector<std::pair<std::string, std::string>> files;
      json extra{{"agent", agent->identity()}};
      if (synth) {
        if (per == 0) throw std::invalid_argument("per-traj must be >= 1");
        const auto trajs = load_checked(dataset, 0, skip, err);
        cases = build_robustness_bench(trajs, per, cfg.seed, forge);
        files.emplace_back("benchmark.jsonl", jsonl(cases, failure_case_to_json));
        extra["dataset_hash"] = file_digest(dataset);
        extra["weights"] = weights_to_json(forge.weights);
      } else {
        if (cases_path.empty()) throw DataError("bench-robust needs --cases or --synthesize with --dataset");
        cases = read_failure_cases(cases_path);
        extra["dataset_hash"] = file_digest(cases_path);
      }
      if (cases.empty()) throw EmptySet("failure cases");
      const auto results = run_failure_cases_parallel(cases, *agent, cfg, br_c.threads);
      MetricsReport rep;
      rep.robustness = robustness_metrics_parallel(results, br_c.threads);
      files.emplace_back("results.jsonl", jsonl(results, failure_result_to_json));
      for (auto& f : report_files(rep)) files.push_back(std::move(f));
      publish(br_c.out, files, manifest("bench-robust", s, extra));
      out << emit_report(rep, ReportFormat::Markdown);
      return kOk;
    }

    if (sy->parsed()) {
      Settings s;
      s.load(sy_c.config);
      const SimConfig mcfg = sy_m.resolve(s);
      const std::uint64_t seed = s.seed(sy_c.o_seed, sy_c.seed);
      const std::string dataset = s.get(o_sy_dataset, sy_dataset, "dataset", std::string());
      const double ratio = s.get(o_sy_ratio, sy_ratio, "ratio_b", 0.3);
      const auto robust = s.get(o_sy_robust, sy_robust, "robust_per_traj", std::size_t{0});
      const auto limit = s.get(o_sy_limit, sy_limit, "limit", std::size_t{0});
      const bool skip = s.get(o_sy_skip, sy_skip, "skip_invalid", false);
      ForgeConfig forge;
      forge.match = mcfg.match();
      const auto defaults = std::vector<double>(forge.weights.w.begin(), forge.weights.w.end());
      forge.weights = parse_weights(
          s.get(o_sy_weights, sy_weights.empty() ? defaults : split_numbers(sy_weights), "weights", defaults));
      s.reject_unknown();

      const auto trajs = load_checked(dataset, limit, skip, err);
      const auto samples = build_sft_dataset(trajs, ratio, seed, forge);
      std::vector<std::pair<std::string, std::string>> files{{"sft.jsonl", jsonl(samples, sample_to_json)}};
      if (robust > 0)
        files.emplace_back("failure_cases.jsonl",
                           jsonl(build_robustness_bench(trajs, robust, seed, forge), failure_case_to_json));
      std::size_t n_b = 0;
      for (const auto& x : samples) n_b += x.sample_type == SampleType::TypeB;
      publish(sy_c.out, files,
              manifest("synth", s,
                       {{"dataset_hash", file_digest(dataset)},
                        {"weights", weights_to_json(forge.weights)},
                        {"ratio_b", ratio}}));
      out << "samples: " << samples.size() << " (type_b " << n_b << ")\n";
      return kOk;
    }

    if (sc->parsed()) {
      Settings s;
      s.load(sc_c.config);
      const SimConfig mcfg = sc_m.resolve(s);
      s.seed(sc_c.o_seed, sc_c.seed);
      RewardConfig rcfg;
      rcfg.match = mcfg.match();
      rcfg.alpha = s.get(o_sc_alpha, sc_alpha, "alpha", 0.5);
      rcfg.beta = s.get(o_sc_beta, sc_beta, "beta", 0.5);
      rcfg.similarity = s.get(o_sc_sim, sc_similarity, "similarity", std::string("token-f1"));
      rcfg.validate();
      GrpoConfig gcfg;
      gcfg.group_size = s.get(o_sc_g, sc_g, "group_size", std::size_t{6});
      gcfg.eps_std = s.get(o_sc_eps_std, sc_eps_std, "eps_std", 1e-8);
      gcfg.eps_clip = s.get(o_sc_eps_clip, sc_eps_clip, "eps_clip", 0.2);
      gcfg.kl_lambda = s.get(o_sc_lambda, sc_lambda, "kl_lambda", 0.05);
      const auto kl = parse_kl_estimator(s.get(o_sc_kl, sc_kl, "kl_estimator", std::string("k3")));
      if (!kl) throw std::invalid_argument("kl-estimator must be k3 or exact");
      gcfg.kl_estimator = *kl;
      gcfg.validate();
      const std::string samples_path = s.get(o_sc_samples, sc_samples, "samples", std::string());
      const std::string outputs_path = s.get(o_sc_outputs, sc_outputs, "outputs", std::string());
      const std::string groups_path = s.get(o_sc_groups, sc_groups, "groups", std::string());
      s.reject_unknown();
      if (samples_path.empty() || outputs_path.empty()) throw DataError("score needs --samples and --outputs");

      const auto samples = read_samples(samples_path);
      const auto outputs = read_outputs(outputs_path);
      const auto rewards = score_parallel(samples, outputs, rcfg, sc_c.threads);
      std::string rewards_jsonl;
      for (std::size_t i = 0; i < rewards.size(); ++i) {
        json j = breakdown_to_json(rewards[i]);
        j["index"] = i;
        rewards_jsonl += j.dump() + "\n";
      }
      std::vector<std::pair<std::string, std::string>> files{{"rewards.jsonl", rewards_jsonl}};
      json extra{{"samples_hash", file_digest(samples_path)}, {"outputs_hash", file_digest(outputs_path)}};
      if (!groups_path.empty()) {
        auto groups = read_groups(groups_path);
        for (auto& g : groups) {
          if (g.outputs.size() != gcfg.group_size)
            err << "warning: group " << g.group_id << " has " << g.outputs.size() << " outputs, expected "
                << gcfg.group_size << '\n';
          for (auto& o : g.outputs) {
            if (o.reward) continue;
            if (*o.sample_index >= rewards.size())
              throw AlignmentMismatch("group " + g.group_id + " refers to sample " +
                                      std::to_string(*o.sample_index) + " of " + std::to_string(rewards.size()));
            o.reward = rewards[*o.sample_index].total;
          }
        }
        const auto reports = grpo_objectives_parallel(groups, gcfg, sc_c.threads);
        files.emplace_back("objective.jsonl",
                           jsonl(reports, [](const ObjectiveReport& r) { return report_to_json(r); }));
        extra["groups_hash"] = file_digest(groups_path);
      }
      extra["grpo"] = grpo_config_to_json(gcfg);
      publish(sc_c.out, files, manifest("score", s, extra));
      double total = 0.0;
      for (const auto& r : rewards) total += r.total;
      out << "scored " << rewards.size() << " outputs, mean reward "
          << format_number(rewards.empty() ? 0.0 : total / static_cast<double>(rewards.size())) << '\n';
      return kOk;
    }

    if (rp->parsed()) {
      Settings s;
      s.load(rp_c.config);
      const SimConfig mcfg = rp_m.resolve(s);
      const std::string input = s.get(o_rp_input, rp_input, "input", std::string());
      const std::string traces_path = s.get(o_rp_traces, rp_traces, "traces", std::string());
      const std::string results_path = s.get(o_rp_results, rp_results, "results", std::string());
      const std::string dataset = s.get(o_rp_dataset, rp_dataset, "dataset", std::string());
      const auto format = parse_report_format(s.get(o_rp_format, rp_format, "format", std::string("markdown")));
      if (!format) throw std::invalid_argument("format must be json, csv or markdown");
      s.reject_unknown();

      MetricsReport rep;
      if (!input.empty()) {
        std::ifstream in(input);
        if (!in) throw DataError("cannot open " + input);
        json j;
        try {
          j = json::parse(in);
        } catch (const json::exception& e) {
          throw DataError(input + ": " + e.what());
        }
        rep = report_from_json(j);
      }
      if (!traces_path.empty()) {
        const auto traces = read_jsonl<SimTrace>(traces_path, [](const json& j) { return trace_from_json(j); });
        rep.task = task_metrics(traces);
        if (!dataset.empty())
          rep.step = step_metrics(predictions_from_traces(load_dataset(dataset), traces), mcfg.match());
      }
      if (!results_path.empty()) {
        const auto results =
            read_jsonl<FailureResult>(results_path, [](const json& j) { return failure_result_from_json(j); });
        rep.robustness = robustness_metrics(results);
      }
      if (!rep.step && !rep.task && !rep.robustness) throw EmptySet("report needs --input, --traces or --results");
      const std::string text = emit_report(rep, *format);
      if (rp_c.out.empty()) {
        out << text;
      } else {
        write_atomic(rp_c.out, text);
      }
      return kOk;
    }
  } catch (const AgentError& e) {
    err << "error: " << e.what() << '\n';
    return kAgentError;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace tvae::cli
