#pragma once

// JSON instances and reports, CSV traces.

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "unbflow/dm.hpp"
#include "unbflow/gp.hpp"
#include "unbflow/matrix_tuple.hpp"
#include "unbflow/opscale.hpp"
#include "unbflow/pencil.hpp"

namespace unbflow {

using Json = nlohmann::json;

/// Reads and parses a JSON file. ParseError carries the path and the byte
/// offset reported by the parser.
Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

/// Complex matrices are arrays of rows of [re, im] pairs.
Json matrix_to_json(const ComplexMatrix& m);
ComplexMatrix matrix_from_json(const Json& j, const std::string& where);

Json tuple_to_json(const MatrixTuple& a);
/// {"n", "m", "N", "matrices"}; validates the kernels unless told otherwise.
MatrixTuple tuple_from_json(const Json& j, KernelCheck check = KernelCheck::Enforce);

Json gp_to_json(const GpInstance& inst);
GpInstance gp_from_json(const Json& j);

Json pencil_to_json(const PencilStructure& s);
PencilStructure pencil_from_json(const Json& j);

Json blocks_to_json(const BlockList& blocks);
BlockList blocks_from_json(const Json& j);
Json dm_report_to_json(const DmReport& r);
Json flag_to_json(const CoarseDmFlag& flag);

/// Nonnegative real matrix as nested arrays.
RealMatrix real_matrix_from_json(const Json& j, const std::string& where);

/// k, F, mu_norm, p_1..p_n, q_1..q_m, offdiag_residual, lower_bound,
/// upper_bound; 17 significant digits.
void write_opscale_csv(std::ostream& os, const OpDescentTrace& trace, Index n, Index m);
/// iter, f, grad_norm, x_1..x_n, grad_1..grad_n.
void write_gp_csv(std::ostream& os, const GpTrace& trace, Index dim);

}  // namespace unbflow
