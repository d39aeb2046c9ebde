#pragma once

#include "gwp/common.hpp"
#include "gwp/data_io.hpp"
#include "gwp/garch.hpp"
#include "gwp/kernels.hpp"
#include "gwp/smc.hpp"
#include "gwp/vi.hpp"
#include "gwp/wishart.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gwp {

using Json = nlohmann::json;

inline constexpr const char* kDatasetSchema = "gwp.dataset/1";
inline constexpr const char* kManifestSchema = "gwp.manifest/1";

/// Throws SchemaError when `j` has a key outside `allowed`.
void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed,
                         const std::string& where);

Json to_json(const Vector& v);
Json to_json(const Matrix& m);
Vector vector_from_json(const Json& j);
Matrix matrix_from_json(const Json& j);

/// {"type": "rbf", "params": {"lengthscale": 0.35}, "children": []}.
Json kernel_to_json(const Kernel& k);
Kernel kernel_from_json(const Json& j);

Json model_to_json(const WishartModel& m);
WishartModel model_from_json(const Json& j);

Json state_to_json(const LatentState& s);
LatentState state_from_json(const Json& j);

Json variational_to_json(const VariationalState& s);
VariationalState variational_from_json(const Json& j);

Json path_to_json(const CovariancePath& p);
CovariancePath path_from_json(const Json& j);

Json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const Json& j);

Json garch_to_json(const DccGarchFit& fit);

/// Long format: x,row,col,value,draw_id over the upper triangle.
void write_paths_csv(std::ostream& out, const std::vector<CovariancePath>& draws);
std::vector<CovariancePath> read_paths_csv(std::istream& in);

/// JSON-lines: one LatentState per line.
void write_states_jsonl(std::ostream& out, const std::vector<LatentState>& states);
std::vector<LatentState> read_states_jsonl(std::istream& in);

Json checkpoint_to_json(const SmcCheckpoint& c);
SmcCheckpoint checkpoint_from_json(const Json& j);

/// FNV-1a 64-bit hash, printed as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace gwp
