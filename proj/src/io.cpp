#include "unbflow/io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

#include "unbflow/error.hpp"

namespace unbflow {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw ParseError(where + ": " + what);
}

const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) bad(where, std::string("missing field \"") + key + "\"");
  return *it;
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) bad(where, "expected a number");
  return j.get<double>();
}

Index integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) bad(where, "expected an integer");
  return j.get<Index>();
}

Complex complex_from(const Json& j, const std::string& where) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2) bad(where, "expected [re, im]");
  return {number(j[0], where + "[0]"), number(j[1], where + "[1]")};
}

std::string fmt17(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path + ": malformed JSON at byte " + std::to_string(e.byte) + ": " +
                     e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed for " + path);
}

Json matrix_to_json(const ComplexMatrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

ComplexMatrix matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) bad(where, "expected a nonempty array of rows");
  const Index rows = static_cast<Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) bad(where + "[0]", "expected a nonempty row");
  const Index cols = static_cast<Index>(j[0].size());
  ComplexMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const std::string wi = where + "[" + std::to_string(i) + "]";
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      bad(wi, "expected a row of length " + std::to_string(cols));
    for (Index c = 0; c < cols; ++c)
      m(i, c) = complex_from(row[static_cast<std::size_t>(c)], wi + "[" + std::to_string(c) + "]");
  }
  if (!m.allFinite()) bad(where, "non-finite entry");
  return m;
}

RealMatrix real_matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) bad(where, "expected a nonempty array of rows");
  const Index rows = static_cast<Index>(j.size());
  if (!j[0].is_array()) bad(where + "[0]", "expected a row");
  const Index cols = static_cast<Index>(j[0].size());
  RealMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const std::string wi = where + "[" + std::to_string(i) + "]";
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      bad(wi, "expected a row of length " + std::to_string(cols));
    for (Index c = 0; c < cols; ++c)
      m(i, c) = number(row[static_cast<std::size_t>(c)], wi + "[" + std::to_string(c) + "]");
  }
  return m;
}

Json tuple_to_json(const MatrixTuple& a) {
  Json mats = Json::array();
  for (const auto& m : a.matrices()) mats.push_back(matrix_to_json(m));
  return {{"n", a.rows()}, {"m", a.cols()}, {"N", a.size()}, {"matrices", mats}};
}

MatrixTuple tuple_from_json(const Json& j, KernelCheck check) {
  const Index n = integer(field(j, "n", "tuple"), "tuple.n");
  const Index m = integer(field(j, "m", "tuple"), "tuple.m");
  const Index count = integer(field(j, "N", "tuple"), "tuple.N");
  const Json& mats = field(j, "matrices", "tuple");
  if (!mats.is_array()) bad("tuple.matrices", "expected an array");
  if (static_cast<Index>(mats.size()) != count)
    throw InvalidInstance("tuple: N = " + std::to_string(count) + " but " +
                          std::to_string(mats.size()) + " matrices given");
  std::vector<ComplexMatrix> out;
  for (std::size_t l = 0; l < mats.size(); ++l) {
    ComplexMatrix a = matrix_from_json(mats[l], "tuple.matrices[" + std::to_string(l) + "]");
    if (a.rows() != n || a.cols() != m)
      throw InvalidInstance("tuple: matrix " + std::to_string(l) + " is " +
                            std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                            ", expected " + std::to_string(n) + "x" + std::to_string(m));
    out.push_back(std::move(a));
  }
  return MatrixTuple(std::move(out), check);
}

Json gp_to_json(const GpInstance& inst) {
  Json terms = Json::array();
  for (const auto& t : inst.terms())
    terms.push_back({{"omega", std::vector<double>(t.omega.data(), t.omega.data() + t.omega.size())},
                     {"a", t.a}});
  return {{"n", inst.dim()}, {"terms", terms}};
}

GpInstance gp_from_json(const Json& j) {
  const Index n = integer(field(j, "n", "gp"), "gp.n");
  const Json& terms = field(j, "terms", "gp");
  if (!terms.is_array()) bad("gp.terms", "expected an array");
  std::vector<GpTerm> out;
  for (std::size_t l = 0; l < terms.size(); ++l) {
    const std::string w = "gp.terms[" + std::to_string(l) + "]";
    const Json& om = field(terms[l], "omega", w);
    if (!om.is_array()) bad(w + ".omega", "expected an array");
    RealVector omega(static_cast<Index>(om.size()));
    for (std::size_t i = 0; i < om.size(); ++i)
      omega(static_cast<Index>(i)) = number(om[i], w + ".omega[" + std::to_string(i) + "]");
    out.push_back({std::move(omega), number(field(terms[l], "a", w), w + ".a")});
  }
  return GpInstance(n, std::move(out));
}

Json pencil_to_json(const PencilStructure& s) {
  Json eigs = Json::array();
  for (const auto& z : s.regular_eigs) eigs.push_back({z.real(), z.imag()});
  return {{"epsilons", s.epsilons},
          {"etas", s.etas},
          {"regular_size", s.regular_size},
          {"regular_eigs", eigs}};
}

PencilStructure pencil_from_json(const Json& j) {
  PencilStructure s;
  auto ints = [&](const char* key) {
    std::vector<Index> v;
    if (!j.contains(key)) return v;
    const Json& a = j.at(key);
    if (!a.is_array()) bad(std::string("pencil.") + key, "expected an array");
    for (std::size_t i = 0; i < a.size(); ++i)
      v.push_back(integer(a[i], std::string("pencil.") + key + "[" + std::to_string(i) + "]"));
    return v;
  };
  if (!j.is_object()) bad("pencil", "expected an object");
  s.epsilons = ints("epsilons");
  s.etas = ints("etas");
  if (j.contains("regular_size")) s.regular_size = integer(j.at("regular_size"), "pencil.regular_size");
  if (j.contains("regular_eigs")) {
    const Json& e = j.at("regular_eigs");
    if (!e.is_array()) bad("pencil.regular_eigs", "expected an array");
    for (std::size_t i = 0; i < e.size(); ++i)
      s.regular_eigs.push_back(complex_from(e[i], "pencil.regular_eigs[" + std::to_string(i) + "]"));
  }
  s.validate();
  return s;
}

Json blocks_to_json(const BlockList& blocks) {
  Json out = Json::array();
  for (const auto& b : blocks) out.push_back({b.rows, b.cols});
  return out;
}

BlockList blocks_from_json(const Json& j) {
  if (!j.is_array()) bad("blocks", "expected an array of [n, m] pairs");
  BlockList out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = "blocks[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != 2) bad(w, "expected [n, m]");
    out.push_back({integer(j[i][0], w), integer(j[i][1], w)});
  }
  return out;
}

Json dm_report_to_json(const DmReport& r) {
  return {{"blocks", blocks_to_json(r.blocks)},
          {"p_star", std::vector<double>(r.p_star.data(), r.p_star.data() + r.p_star.size())},
          {"q_star", std::vector<double>(r.q_star.data(), r.q_star.data() + r.q_star.size())},
          {"C_A", r.c_a},
          {"min_norm", r.min_norm}};
}

Json flag_to_json(const CoarseDmFlag& flag) {
  Json chain = Json::array();
  for (const auto& p : flag.chain)
    chain.push_back({{"X", matrix_to_json(p.x)}, {"Y", matrix_to_json(p.y)},
                     {"dim_X", p.x.rows()}, {"dim_Y", p.y.rows()}});
  return {{"blocks", blocks_to_json(flag.blocks)}, {"chain", chain}};
}

void write_opscale_csv(std::ostream& os, const OpDescentTrace& trace, Index n, Index m) {
  os << "k,F,mu_norm";
  for (Index i = 1; i <= n; ++i) os << ",p_" << i;
  for (Index j = 1; j <= m; ++j) os << ",q_" << j;
  os << ",offdiag_residual,lower_bound,upper_bound\n";
  for (const auto& e : trace.entries) {
    os << e.k << ',' << fmt17(e.value) << ',' << fmt17(e.mu_norm);
    for (Index i = 0; i < e.p.size(); ++i) os << ',' << fmt17(e.p(i));
    for (Index j = 0; j < e.q.size(); ++j) os << ',' << fmt17(e.q(j));
    os << ',' << fmt17(e.offdiag_residual) << ',' << fmt17(e.lower_bound) << ','
       << fmt17(e.upper_bound) << '\n';
  }
}

void write_gp_csv(std::ostream& os, const GpTrace& trace, Index dim) {
  os << "iter,f,grad_norm";
  for (Index i = 1; i <= dim; ++i) os << ",x_" << i;
  for (Index i = 1; i <= dim; ++i) os << ",grad_" << i;
  os << '\n';
  for (const auto& e : trace.entries) {
    os << e.iter << ',' << fmt17(e.value) << ',' << fmt17(e.gradient.norm());
    for (Index i = 0; i < e.x.size(); ++i) os << ',' << fmt17(e.x(i));
    for (Index i = 0; i < e.gradient.size(); ++i) os << ',' << fmt17(e.gradient(i));
    os << '\n';
  }
}

}  // namespace unbflow
