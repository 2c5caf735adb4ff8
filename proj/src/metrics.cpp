#include "tvae/metrics.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "tvae/errors.hpp"

namespace tvae {

using nlohmann::json;

std::vector<StepPrediction> predictions_from_traces(std::span<const TrajectoryRecord> trajs,
                                                    std::span<const SimTrace> traces) {
  std::vector<StepPrediction> out;
  for (const SimTrace& t : traces) {
    const TrajectoryRecord* traj = nullptr;
    for (const auto& r : trajs)
      if (r.id == t.trajectory_id) {
        traj = &r;
        break;
      }
    if (traj == nullptr) throw AlignmentMismatch("trace refers to unknown trajectory '" + t.trajectory_id + "'");
    for (const AttemptLog& a : t.attempts) {
      if (a.gt_step >= traj->length()) throw AlignmentMismatch("trace step out of range for '" + t.trajectory_id + "'");
      out.push_back({t.trajectory_id, a.gt_step, a.issued, traj->steps[a.gt_step]});
    }
  }
  return out;
}

namespace {

struct StepCounts {
  std::size_t n = 0, tm = 0, sr = 0, g = 0, g_hit = 0, gtm = 0, gtm_hit = 0;
};

bool grounded_kind(ActionKind k) { return is_spatial(k) || is_textual(k); }

void count_step(const StepPrediction& p, const MatchConfig& cfg, StepCounts& c) {
  c.n += 1;
  const ActionRecord& gt = p.gt.gt_action;
  const bool kind_ok = p.predicted && p.predicted->kind == gt.kind;
  const bool params_ok = p.predicted && parameters_match(*p.predicted, gt, p.gt.gt_bbox, cfg);
  c.tm += kind_ok;
  c.sr += kind_ok && params_ok;
  if (grounded_kind(gt.kind)) {
    c.g += 1;
    c.g_hit += params_ok;
    if (kind_ok) {
      c.gtm += 1;
      c.gtm_hit += params_ok;
    }
  }
}

StepMetrics finish(const StepCounts& c) {
  StepMetrics m;
  const auto ratio = [](std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); };
  m.n = c.n;
  m.tm = ratio(c.tm, c.n);
  m.sr = ratio(c.sr, c.n);
  m.n_grounding = c.g;
  m.n_grounding_tm = c.gtm;
  if (c.g) m.gr = ratio(c.g_hit, c.g);
  if (c.gtm) m.gr_given_tm = ratio(c.gtm_hit, c.gtm);
  return m;
}

int thread_count(int threads) { return threads > 0 ? threads : omp_get_max_threads(); }

// Sums fixed blocks in parallel and adds the block totals in order, so the
// result does not depend on the thread count.
template <class F>
double blocked_sum(std::size_t n, int threads, F&& term) {
  constexpr std::size_t kBlock = 1024;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(blocks, 0.0);
  const auto nb = static_cast<std::int64_t>(blocks);
#pragma omp parallel for schedule(static) num_threads(thread_count(threads))
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    partial[static_cast<std::size_t>(b)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

}  // namespace

StepMetrics step_metrics(std::span<const StepPrediction> preds, const MatchConfig& cfg) {
  if (preds.empty()) throw EmptySet("step predictions");
  StepCounts c;
  for (const auto& p : preds) count_step(p, cfg, c);
  return finish(c);
}

StepMetrics step_metrics_parallel(std::span<const StepPrediction> preds, const MatchConfig& cfg, int threads) {
  if (preds.empty()) throw EmptySet("step predictions");
  std::size_t n = 0, tm = 0, sr = 0, g = 0, g_hit = 0, gtm = 0, gtm_hit = 0;
  const auto count = static_cast<std::int64_t>(preds.size());
#pragma omp parallel for schedule(static) num_threads(thread_count(threads)) \
    reduction(+ : n, tm, sr, g, g_hit, gtm, gtm_hit)
  for (std::int64_t i = 0; i < count; ++i) {
    StepCounts c;
    count_step(preds[static_cast<std::size_t>(i)], cfg, c);
    n += c.n;
    tm += c.tm;
    sr += c.sr;
    g += c.g;
    g_hit += c.g_hit;
    gtm += c.gtm;
    gtm_hit += c.gtm_hit;
  }
  return finish({n, tm, sr, g, g_hit, gtm, gtm_hit});
}

std::size_t prefix_correct(const SimTrace& t) {
  std::size_t k = 0;
  for (const AttemptLog& a : t.attempts) {
    if (!a.matched) break;
    ++k;
  }
  return k;
}

namespace {

TaskMetrics finish_task(std::size_t n, std::size_t first_try, std::size_t completed, std::size_t overhead,
                        double pg_sum) {
  TaskMetrics m;
  m.n = n;
  m.n_completed = completed;
  m.tsr = static_cast<double>(first_try) / static_cast<double>(n);
  m.sim_tsr = static_cast<double>(completed) / static_cast<double>(n);
  m.pg = pg_sum / static_cast<double>(n);
  m.aso = completed ? static_cast<double>(overhead) / static_cast<double>(completed)
                    : std::numeric_limits<double>::infinity();
  return m;
}

double pg_term(const SimTrace& t) {
  if (t.t_gt == 0) throw InvariantViolation(t.trajectory_id, "t_gt", "trace has no ground-truth steps");
  return static_cast<double>(prefix_correct(t)) / static_cast<double>(t.t_gt);
}

}  // namespace

TaskMetrics task_metrics(std::span<const SimTrace> traces) {
  if (traces.empty()) throw EmptySet("traces");
  std::size_t first_try = 0, completed = 0, overhead = 0;
  double pg = 0.0;
  for (const SimTrace& t : traces) {
    first_try += t.outcome == Outcome::CompletedFirstTry;
    if (t.outcome != Outcome::BudgetExhausted) {
      completed += 1;
      overhead += t.steps_used - t.t_gt;
    }
    pg += pg_term(t);
  }
  return finish_task(traces.size(), first_try, completed, overhead, pg);
}

TaskMetrics task_metrics_parallel(std::span<const SimTrace> traces, int threads) {
  if (traces.empty()) throw EmptySet("traces");
  std::size_t first_try = 0, completed = 0, overhead = 0;
  const auto count = static_cast<std::int64_t>(traces.size());
#pragma omp parallel for schedule(static) num_threads(thread_count(threads)) \
    reduction(+ : first_try, completed, overhead)
  for (std::int64_t i = 0; i < count; ++i) {
    const SimTrace& t = traces[static_cast<std::size_t>(i)];
    first_try += t.outcome == Outcome::CompletedFirstTry;
    if (t.outcome != Outcome::BudgetExhausted) {
      completed += 1;
      overhead += t.steps_used - t.t_gt;
    }
  }
  const double pg = blocked_sum(traces.size(), threads, [&](std::size_t i) { return pg_term(traces[i]); });
  return finish_task(traces.size(), first_try, completed, overhead, pg);
}

RobustnessMetrics robustness_metrics(std::span<const FailureResult> results) {
  if (results.empty()) throw EmptySet("failure results");
  std::size_t rep = 0, rec = 0;
  for (const auto& r : results) {
    rep += r.repeated;
    rec += r.recovered;
  }
  const double n = static_cast<double>(results.size());
  return {static_cast<double>(rep) / n, static_cast<double>(rec) / n, results.size()};
}

RobustnessMetrics robustness_metrics_parallel(std::span<const FailureResult> results, int threads) {
  if (results.empty()) throw EmptySet("failure results");
  std::size_t rep = 0, rec = 0;
  const auto count = static_cast<std::int64_t>(results.size());
#pragma omp parallel for schedule(static) num_threads(thread_count(threads)) reduction(+ : rep, rec)
  for (std::int64_t i = 0; i < count; ++i) {
    rep += results[static_cast<std::size_t>(i)].repeated;
    rec += results[static_cast<std::size_t>(i)].recovered;
  }
  const double n = static_cast<double>(results.size());
  return {static_cast<double>(rep) / n, static_cast<double>(rec) / n, results.size()};
}

std::optional<ReportFormat> parse_report_format(std::string_view s) noexcept {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  return std::nullopt;
}

namespace {

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_opt(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

json report_to_json(const MetricsReport& r) {
  json j;
  if (r.step) {
    const auto& s = *r.step;
    j["step"] = {{"tm", s.tm},
                 {"gr", opt_number(s.gr)},
                 {"gr_given_tm", opt_number(s.gr_given_tm)},
                 {"sr", s.sr},
                 {"n", s.n},
                 {"n_grounding", s.n_grounding},
                 {"n_grounding_tm", s.n_grounding_tm}};
  } else {
    j["step"] = nullptr;
  }
  if (r.task) {
    const auto& t = *r.task;
    j["task"] = {{"tsr", t.tsr},
                 {"pg", t.pg},
                 {"sim_tsr", t.sim_tsr},
                 {"aso", std::isinf(t.aso) ? json("inf") : json(t.aso)},
                 {"n", t.n},
                 {"n_completed", t.n_completed}};
  } else {
    j["task"] = nullptr;
  }
  if (r.robustness) {
    const auto& b = *r.robustness;
    j["robustness"] = {{"lr", b.lr}, {"rsr", b.rsr}, {"n", b.n}};
  } else {
    j["robustness"] = nullptr;
  }
  return j;
}

MetricsReport report_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("report must be a JSON object");
  MetricsReport r;
  try {
    if (j.contains("step") && !j["step"].is_null()) {
      const json& s = j["step"];
      StepMetrics m;
      m.tm = s.at("tm").get<double>();
      m.gr = read_opt(s, "gr");
      m.gr_given_tm = read_opt(s, "gr_given_tm");
      m.sr = s.at("sr").get<double>();
      m.n = s.at("n").get<std::size_t>();
      m.n_grounding = s.at("n_grounding").get<std::size_t>();
      m.n_grounding_tm = s.at("n_grounding_tm").get<std::size_t>();
      r.step = m;
    }
    if (j.contains("task") && !j["task"].is_null()) {
      const json& t = j["task"];
      TaskMetrics m;
      m.tsr = t.at("tsr").get<double>();
      m.pg = t.at("pg").get<double>();
      m.sim_tsr = t.at("sim_tsr").get<double>();
      const json& aso = t.at("aso");
      if (aso.is_string()) {
        if (aso.get<std::string>() != "inf") throw SchemaError("aso must be a number or \"inf\"");
        m.aso = std::numeric_limits<double>::infinity();
      } else {
        m.aso = aso.get<double>();
      }
      m.n = t.at("n").get<std::size_t>();
      m.n_completed = t.at("n_completed").get<std::size_t>();
      r.task = m;
    }
    if (j.contains("robustness") && !j["robustness"].is_null()) {
      const json& b = j["robustness"];
      r.robustness = RobustnessMetrics{b.at("lr").get<double>(), b.at("rsr").get<double>(), b.at("n").get<std::size_t>()};
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("report: ") + e.what());
  }
  return r;
}

namespace {

std::string csv_cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string percent(const std::optional<double>& v) {
  if (!v) return "--";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
  return buf;
}

}  // namespace

std::string emit_report(const MetricsReport& r, ReportFormat format) {
  std::optional<double> tm, gr, sr, tsr, pg, sim, aso, lr, rsr;
  if (r.step) {
    tm = r.step->tm;
    gr = r.step->gr;
    sr = r.step->sr;
  }
  if (r.task) {
    tsr = r.task->tsr;
    pg = r.task->pg;
    sim = r.task->sim_tsr;
    aso = r.task->aso;
  }
  if (r.robustness) {
    lr = r.robustness->lr;
    rsr = r.robustness->rsr;
  }

  switch (format) {
    case ReportFormat::Json: return report_to_json(r).dump(2) + "\n";
    case ReportFormat::Csv: {
      std::ostringstream os;
      os << "tm,gr,sr,tsr,pg,sim_tsr,aso,lr,rsr\n";
      const std::string aso_cell = aso && std::isinf(*aso) ? "inf" : csv_cell(aso);
      os << csv_cell(tm) << ',' << csv_cell(gr) << ',' << csv_cell(sr) << ',' << csv_cell(tsr) << ','
         << csv_cell(pg) << ',' << csv_cell(sim) << ',' << aso_cell << ',' << csv_cell(lr) << ',' << csv_cell(rsr)
         << '\n';
      return os.str();
    }
    case ReportFormat::Markdown: {
      std::string aso_cell = "--";
      if (aso) {
        if (std::isinf(*aso)) {
          aso_cell = "\xE2\x88\x9E";
        } else {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.2f", *aso);
          aso_cell = buf;
        }
      }
      std::ostringstream os;
      os << "| TM | GR | SR | TSR | PG | Sim-TSR | ASO\xE2\x86\x93 | LR\xE2\x86\x93 | RSR |\n";
      os << "|---|---|---|---|---|---|---|---|---|\n";
      os << "| " << percent(tm) << " | " << percent(gr) << " | " << percent(sr) << " | " << percent(tsr) << " | "
         << percent(pg) << " | " << percent(sim) << " | " << aso_cell << " | " << percent(lr) << " | "
         << percent(rsr) << " |\n";
      return os.str();
    }
  }
  return {};
}

}  // namespace tvae
