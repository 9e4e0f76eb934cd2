#include "unbflow/cli.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "unbflow/dm.hpp"
#include "unbflow/error.hpp"
#include "unbflow/gp.hpp"
#include "unbflow/io.hpp"
#include "unbflow/opscale.hpp"
#include "unbflow/pencil.hpp"
#include "unbflow/pipeline.hpp"

namespace unbflow {

namespace {

struct RunConfig {
  std::string input;
  Index iters = 0;
  Index log_every = 0;
  std::optional<double> gap_threshold;
  std::string trace_path;
  std::string out_path;
  // pencil synth
  std::vector<Index> epsilons;
  std::vector<Index> etas;
  Index regular_size = 0;
  std::vector<double> regular_eigs;
  std::optional<std::uint64_t> seed;
  double cond = 20.0;
};

std::string g17(double v) { return fmt::format("{:.17g}", v); }

std::string vec_str(const RealVector& v) {
  std::string s = "(";
  for (Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt::format("{:.6g}", v(i));
  return s + ")";
}

std::string blocks_str(const BlockList& blocks) {
  std::string s = "[";
  for (std::size_t i = 0; i < blocks.size(); ++i)
    s += (i ? "," : "") + fmt::format("({},{})", blocks[i].rows, blocks[i].cols);
  return s + "]";
}

std::string index_str(const std::vector<Index>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + ")";
}

void require_iters(const RunConfig& c) {
  if (c.iters < 1) throw InvalidInstance("--iters must be at least 1");
  if (c.log_every < 1) throw InvalidInstance("--log-every must be at least 1");
}

void write_json(const std::string& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

// A bare tuple, or any object wrapping one under "tuple" (pencil synth output).
MatrixTuple read_tuple(const std::string& path) {
  const Json j = read_json_file(path);
  return tuple_from_json(j.is_object() && j.contains("tuple") ? j.at("tuple") : j);
}

// Accepts either a bare nested array or {"matrix": [...]}.
RealMatrix read_weight_matrix(const std::string& path) {
  const Json j = read_json_file(path);
  if (j.is_object() && j.contains("matrix")) return real_matrix_from_json(j.at("matrix"), "matrix");
  return real_matrix_from_json(j, "matrix");
}

int cmd_gp_run(const RunConfig& c, std::ostream& out) {
  require_iters(c);
  const Json j = read_json_file(c.input);
  const GpInstance inst = (j.is_object() && j.contains("matrix"))
                              ? matscale_instance(real_matrix_from_json(j.at("matrix"), "matrix"))
                              : gp_from_json(j);
  GpDescentOptions opts;
  opts.record_every = c.log_every;
  const GpTrace trace = gp_descent(inst, RealVector::Zero(inst.dim()), c.iters, opts);
  const RealVector oracle = min_norm_oracle(inst.exponents());
  const auto& last = trace.entries.back();
  out << "L = " << g17(trace.lipschitz) << "\n"
      << "final f = " << g17(last.value) << "\n"
      << "final grad = " << vec_str(last.gradient) << "  |grad| = " << g17(last.gradient.norm()) << "\n"
      << "min-norm point = " << vec_str(oracle) << "  |p*| = " << g17(oracle.norm()) << "\n"
      << "|grad - p*| = " << g17((last.gradient - oracle).norm()) << "\n"
      << "x/k = " << vec_str(last.x / static_cast<double>(last.iter > 0 ? last.iter : 1)) << "\n";
  if (!c.trace_path.empty()) {
    std::ostringstream csv;
    write_gp_csv(csv, trace, inst.dim());
    write_text_file(c.trace_path, csv.str());
  }
  if (!c.out_path.empty()) {
    const std::vector<double> g(last.gradient.data(), last.gradient.data() + last.gradient.size());
    const std::vector<double> p(oracle.data(), oracle.data() + oracle.size());
    write_json(c.out_path, {{"iters", c.iters},
                            {"lipschitz", trace.lipschitz},
                            {"final_value", last.value},
                            {"final_gradient", g},
                            {"min_norm_point", p}});
  }
  return kExitOk;
}

int cmd_opscale_run(const RunConfig& c, std::ostream& out) {
  require_iters(c);
  const MatrixTuple a = read_tuple(c.input);
  const OpDescentTrace trace = run_descent(a, c.iters, c.log_every);
  const DualityCertificate cert = duality_certificate(a, trace);
  const Scalability cls = classify(trace);
  out << "final mu_norm = " << g17(trace.entries.back().mu_norm) << "\n"
      << "lower bound = " << g17(cert.lower) << "\n"
      << "gap = " << g17(cert.gap()) << "\n"
      << "classification = "
      << (cls == Scalability::Unscalable ? "unscalable" : "scalable-or-undecided") << "\n";
  if (!c.trace_path.empty()) {
    std::ostringstream csv;
    write_opscale_csv(csv, trace, a.rows(), a.cols());
    write_text_file(c.trace_path, csv.str());
  }
  if (!c.out_path.empty())
    write_json(c.out_path, {{"iters", c.iters},
                            {"mu_norm", trace.entries.back().mu_norm},
                            {"upper", cert.upper},
                            {"lower", cert.lower},
                            {"unscalable", cls == Scalability::Unscalable}});
  return kExitOk;
}

Json analysis_json(const CoarseAnalysis& r) {
  Json checks = Json::array();
  for (const auto& pc : r.pair_checks) checks.push_back({{"member", pc.member}, {"violation", pc.violation}});
  return {{"iters", r.trace.iterations},
          {"gap_threshold", r.gap_threshold},
          {"report", dm_report_to_json(r.report)},
          {"flag", flag_to_json(r.flag)},
          {"pair_checks", checks},
          {"offdiag_residual", r.offdiag_residual},
          {"upper", r.certificate.upper},
          {"lower", r.certificate.lower},
          {"unscalable", r.scalability == Scalability::Unscalable}};
}

void print_analysis(const CoarseAnalysis& r, std::ostream& out) {
  out << "blocks = " << blocks_str(r.blocks) << "\n"
      << "p* = " << vec_str(r.report.p_star) << "\n"
      << "q* = " << vec_str(r.report.q_star) << "\n"
      << "C_A = " << g17(r.report.c_a) << "  min_norm = " << g17(r.report.min_norm) << "\n"
      << "final mu_norm = " << g17(r.certificate.upper) << "  lower bound = " << g17(r.certificate.lower)
      << "\n"
      << "offdiag_residual = " << fmt::format("{:.3e}", r.offdiag_residual) << "\n";
}

AnalysisOptions analysis_options(const RunConfig& c) {
  AnalysisOptions o;
  o.iters = c.iters;
  o.log_every = c.log_every;
  o.gap_threshold = c.gap_threshold;
  return o;
}

int cmd_opscale_analyze(const RunConfig& c, std::ostream& out) {
  require_iters(c);
  const MatrixTuple a = read_tuple(c.input);
  const CoarseAnalysis r = analyze_coarse(a, analysis_options(c));
  print_analysis(r, out);
  if (!c.out_path.empty()) write_json(c.out_path, analysis_json(r));
  return kExitOk;
}

int cmd_dm_brute(const RunConfig& c, std::ostream& out) {
  const RealMatrix w = read_weight_matrix(c.input);
  const CoarseDmFlag flag = coordinate_dm_bruteforce(w);
  const DmReport rep = dm_report(flag.blocks);
  out << "blocks = " << blocks_str(flag.blocks) << "\n"
      << "p* = " << vec_str(rep.p_star) << "\n"
      << "q* = " << vec_str(rep.q_star) << "\n"
      << "C_A = " << g17(rep.c_a) << "  min_norm = " << g17(rep.min_norm) << "\n";
  if (!c.out_path.empty())
    write_json(c.out_path, {{"report", dm_report_to_json(rep)}, {"flag", flag_to_json(flag)}});
  return kExitOk;
}

int cmd_pencil_synth(const RunConfig& c, std::ostream& out) {
  if (!c.seed) throw InvalidInstance("pencil synth requires --seed");
  PencilStructure s;
  s.epsilons = c.epsilons;
  s.etas = c.etas;
  std::sort(s.epsilons.begin(), s.epsilons.end());
  std::sort(s.etas.begin(), s.etas.end());
  s.regular_size = c.regular_size;
  if (!c.regular_eigs.empty()) {
    for (double e : c.regular_eigs) s.regular_eigs.emplace_back(e, 0.0);
  } else {
    for (Index i = 0; i < c.regular_size; ++i) s.regular_eigs.emplace_back(static_cast<double>(i + 1), 0.0);
  }
  const SynthesizedPencil p = synthesize(s, *c.seed, c.cond);
  const Json j = {{"structure", pencil_to_json(s)},
                  {"seed", *c.seed},
                  {"ground_truth", blocks_to_json(p.ground_truth)},
                  {"tuple", tuple_to_json(p.tuple)}};
  if (c.out_path.empty())
    out << j.dump(2) << "\n";
  else
    write_json(c.out_path, j);
  return kExitOk;
}

int cmd_pencil_recover(const RunConfig& c, std::ostream& out) {
  require_iters(c);
  const Json j = read_json_file(c.input);
  const bool wrapped = j.is_object() && j.contains("tuple");
  const MatrixTuple a = tuple_from_json(wrapped ? j.at("tuple") : j);
  if (a.size() != 2) throw InvalidInstance("pencil recover expects a tuple with N = 2");
  const CoarseAnalysis r = analyze_coarse(a, analysis_options(c));
  const PencilStructure s = recover_structure(r.blocks);
  out << "blocks = " << blocks_str(r.blocks) << "\n"
      << "epsilons = " << index_str(s.epsilons) << "\n"
      << "etas = " << index_str(s.etas) << "\n"
      << "regular_size = " << s.regular_size << "\n"
      << "offdiag_residual = " << fmt::format("{:.3e}", r.offdiag_residual) << "\n";
  Json report = analysis_json(r);
  report["epsilons"] = s.epsilons;
  report["etas"] = s.etas;
  report["regular_size"] = s.regular_size;
  if (wrapped && j.contains("structure")) {
    const PencilStructure truth = pencil_from_json(j.at("structure"));
    const bool match = truth.epsilons == s.epsilons && truth.etas == s.etas &&
                       truth.regular_size == s.regular_size;
    out << "ground truth: epsilons = " << index_str(truth.epsilons) << ", etas = " << index_str(truth.etas)
        << ", regular_size = " << truth.regular_size << "\n"
        << "match = " << (match ? "yes" : "no") << "\n";
    report["match"] = match;
  }
  if (!c.out_path.empty()) write_json(c.out_path, report);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  init_logging();
  CLI::App app{"Gradient descent on lower-unbounded convex objectives: matrix and operator scaling"};
  app.require_subcommand(1);
  RunConfig c;
  std::function<int()> action;

  auto* gp = app.add_subcommand("gp", "Euclidean log-sum-exp descent")->require_subcommand(1);
  auto* gp_run = gp->add_subcommand("run", "gradient descent plus min-norm oracle report");
  gp_run->add_option("input", c.input, "GpInstance JSON or {\"matrix\": ...}")->required();
  gp_run->add_option("--trace", c.trace_path, "trace CSV");
  gp_run->add_option("--out", c.out_path, "report JSON");

  auto* op = app.add_subcommand("opscale", "operator scaling")->require_subcommand(1);
  auto* op_run = op->add_subcommand("run", "descent, duality certificate and trace CSV");
  op_run->add_option("input", c.input, "MatrixTuple JSON, or pencil synth output")->required();
  op_run->add_option("--trace", c.trace_path, "trace CSV");
  op_run->add_option("--out", c.out_path, "report JSON");
  op_run->callback([&] { action = [&] { return cmd_opscale_run(c, out); }; });

  auto* op_an = op->add_subcommand("analyze", "coarse block structure and flag");
  op_an->add_option("input", c.input, "MatrixTuple JSON, or pencil synth output")->required();
  op_an->add_option("--gap-threshold", c.gap_threshold, "clustering threshold override");
  op_an->add_option("--out", c.out_path, "report JSON");
  op_an->callback([&] { action = [&] { return cmd_opscale_analyze(c, out); }; });

  auto* dm = app.add_subcommand("dm", "Dulmage-Mendelsohn tools")->require_subcommand(1);
  auto* dm_brute = dm->add_subcommand("brute", "coordinate-subspace oracle (n, m <= 8)");
  dm_brute->add_option("input", c.input, "nonnegative matrix JSON")->required();
  dm_brute->add_option("--out", c.out_path, "report JSON");
  dm_brute->callback([&] { action = [&] { return cmd_dm_brute(c, out); }; });

  auto* pen = app.add_subcommand("pencil", "matrix pencils")->require_subcommand(1);
  auto* synth = pen->add_subcommand("synth", "synthesize a pencil with known minimal indices");
  synth->add_option("--eps", c.epsilons, "right minimal indices");
  synth->add_option("--eta", c.etas, "left minimal indices");
  synth->add_option("--regular-size", c.regular_size, "size of the regular part");
  synth->add_option("--regular-eigs", c.regular_eigs, "real eigenvalues of the regular part (default 1..r)");
  synth->add_option("--seed", c.seed, "random seed")->required();
  synth->add_option("--cond", c.cond, "condition cap of g and h")->capture_default_str();
  synth->add_option("--out", c.out_path, "output JSON (stdout if omitted)");
  synth->callback([&] { action = [&] { return cmd_pencil_synth(c, out); }; });

  auto* recover = pen->add_subcommand("recover", "recover minimal indices by descent");
  recover->add_option("input", c.input, "pencil JSON from synth, or a bare tuple")->required();
  recover->add_option("--gap-threshold", c.gap_threshold, "clustering threshold override");
  recover->add_option("--out", c.out_path, "report JSON");
  recover->callback([&] { action = [&] { return cmd_pencil_recover(c, out); }; });

  // Iteration defaults differ per command.
  c.iters = 1000;
  c.log_every = 100;
  for (auto* sub : {gp_run, op_run}) {
    sub->add_option("--iters", c.iters, "descent iterations")->capture_default_str();
    sub->add_option("--log-every", c.log_every, "logging period")->capture_default_str();
  }
  for (auto* sub : {op_an, recover}) {
    sub->add_option("--iters", c.iters, "descent iterations (default 20000)");
    sub->add_option("--log-every", c.log_every, "logging period (default 1000)");
  }
  gp_run->callback([&] { action = [&] { return cmd_gp_run(c, out); }; });
  for (auto* sub : {op_an, recover}) {
    sub->preparse_callback([&](std::size_t) {
      c.iters = 20000;
      c.log_every = 1000;
    });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    return action ? action() : kExitFailure;
  } catch (const UnresolvedStructure& e) {
    err << "unresolved block structure: " << e.what() << "\n";
    return kExitUnresolved;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace unbflow
