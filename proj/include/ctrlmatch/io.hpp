#pragma once

#include "ctrlmatch/sim.hpp"
#include "ctrlmatch/types.hpp"

#include <json.hpp>

#include <string>

namespace ctrlmatch {

using Json = nlohmann::json;

/// Row-major nested arrays <-> dense matrices.
Json matrix_to_json(const Matrix& m);
Json vector_to_json(const Vector& v);
Matrix matrix_from_json(const Json& j);
Vector vector_from_json(const Json& j);

/// 17-significant-digit decimal rendering (round-trips bit exactly).
std::string format_double(double value);

/// Trace CSV: header t,x1..xn,u1..um,y1..yp,r1..rp, 17-digit floats, LF rows.
std::string trace_to_csv(const SimTrace& trace);
void write_file(const std::string& path, const std::string& contents);

/// Rejects any key not in `allowed` (strict schema).
void require_keys(const Json& j, std::initializer_list<const char*> allowed,
                  const std::string& where);

}  // namespace ctrlmatch
