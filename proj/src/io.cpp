#include "ctrlmatch/io.hpp"

#include <cstdio>
#include <fstream>

namespace ctrlmatch {

Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (int i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Json vector_to_json(const Vector& v) {
    Json out = Json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty())
        throw Error(ErrorCode::ConfigParse, "expected a non-empty array of rows");
    // allow a flat array as a single row
    if (!j[0].is_array()) {
        Matrix m(1, j.size());
        for (size_t k = 0; k < j.size(); ++k) {
            if (!j[k].is_number()) throw Error(ErrorCode::ConfigParse, "matrix entries must be numbers");
            m(0, static_cast<int>(k)) = j[k].get<double>();
        }
        return m;
    }
    const size_t cols = j[0].size();
    Matrix m(j.size(), cols);
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw Error(ErrorCode::ConfigParse, "ragged matrix rows");
        for (size_t k = 0; k < cols; ++k) {
            if (!j[i][k].is_number())
                throw Error(ErrorCode::ConfigParse, "matrix entries must be numbers");
            m(static_cast<int>(i), static_cast<int>(k)) = j[i][k].get<double>();
        }
    }
    return m;
}

Vector vector_from_json(const Json& j) {
    const Matrix m = matrix_from_json(j);
    if (m.rows() == 1) return m.row(0).transpose();
    if (m.cols() == 1) return m.col(0);
    throw Error(ErrorCode::ConfigParse, "expected a vector");
}

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

std::string trace_to_csv(const SimTrace& trace) {
    std::string out = "t";
    for (int i = 0; i < trace.x.rows(); ++i) out += ",x" + std::to_string(i + 1);
    for (int i = 0; i < trace.u.rows(); ++i) out += ",u" + std::to_string(i + 1);
    for (int i = 0; i < trace.y.rows(); ++i) out += ",y" + std::to_string(i + 1);
    for (int i = 0; i < trace.r.rows(); ++i) out += ",r" + std::to_string(i + 1);
    out += "\n";
    for (int k = 0; k < trace.steps(); ++k) {
        out += format_double(trace.t(k));
        for (int i = 0; i < trace.x.rows(); ++i) out += "," + format_double(trace.x(i, k));
        for (int i = 0; i < trace.u.rows(); ++i) out += "," + format_double(trace.u(i, k));
        for (int i = 0; i < trace.y.rows(); ++i) out += "," + format_double(trace.y(i, k));
        for (int i = 0; i < trace.r.rows(); ++i) out += "," + format_double(trace.r(i, k));
        out += "\n";
    }
    return out;
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream stream(path, std::ios::binary);
    if (!stream) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
    stream << contents;
    if (!stream) throw Error(ErrorCode::Io, "failed writing " + path);
}

void require_keys(const Json& j, std::initializer_list<const char*> allowed,
                  const std::string& where) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigParse, where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* name : allowed)
            if (key == name) {
                ok = true;
                break;
            }
        if (!ok) throw Error(ErrorCode::ConfigParse, "unknown key '" + key + "' in " + where);
    }
}

}  // namespace ctrlmatch
