#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "tdlab/errors.hpp"
#include "tdlab/features.hpp"
#include "tdlab/mrp.hpp"

namespace tdlab {

using Json = nlohmann::json;

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open " + path);
  try {
    Json j;
    in >> j;
    return j;
  } catch (const Json::exception& ex) {
    throw SpecError("failed to parse " + path + ": " + ex.what());
  }
}

inline void save_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot open " + path + " for writing");
  out << content;
  if (!out) throw RuntimeFailure("failed while writing " + path);
}

// Shortest reasonably precise decimal form, used for CSV cells.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

namespace detail {

inline int edit_distance(const std::string& a, const std::string& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace detail

// "unknown key 'x'; did you mean 'y'?" when something close exists,
// otherwise lists the accepted keys.
inline std::string unknown_key_message(const std::string& given,
                                       const std::vector<std::string>& known,
                                       const std::string& where) {
  std::string best;
  int best_d = 1 << 20;
  for (const auto& k : known) {
    const int d = detail::edit_distance(given, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  std::string msg = "unknown key '" + given + "' in " + where;
  if (!best.empty() && best_d <= std::max<int>(2, static_cast<int>(best.size()) / 3)) {
    msg += "; did you mean '" + best + "'?";
  } else {
    msg += "; accepted keys:";
    for (const auto& k : known) msg += " " + k;
  }
  return msg;
}

inline void validate_keys(const Json& obj, const std::vector<std::string>& known,
                          const std::string& where) {
  if (!obj.is_object()) throw SpecError(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw SpecError(unknown_key_message(item.key(), known, where));
    }
  }
}

inline Eigen::VectorXd parse_vector(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw SpecError(what + " must be a non-empty array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SpecError(what + " must contain only numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd parse_matrix(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw SpecError(what + " must be a non-empty array of rows");
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  Eigen::MatrixXd m;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].empty()) {
      throw SpecError(what + " row " + std::to_string(i) + " must be a non-empty array");
    }
    if (i == 0) {
      cols = j[i].size();
      m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    } else if (j[i].size() != cols) {
      throw SpecError(what + " rows have inconsistent lengths");
    }
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw SpecError(what + " must contain only numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

inline Json vector_to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

// Chain description: {"transition": [[...]], "reward": [...], "discount": x}.
inline MarkovRewardProcess parse_mrp(const Json& j, const std::string& where = "chain") {
  validate_keys(j, {"transition", "reward", "discount"}, where);
  for (const char* key : {"transition", "reward", "discount"}) {
    if (!j.contains(key)) throw SpecError(where + " is missing required key '" + key + "'");
  }
  MarkovRewardProcess mrp;
  mrp.transition = parse_matrix(j["transition"], where + ".transition");
  mrp.reward = parse_vector(j["reward"], where + ".reward");
  if (!j["discount"].is_number()) throw SpecError(where + ".discount must be a number");
  mrp.discount = j["discount"].get<double>();
  mrp.validate();
  return mrp;
}

inline MarkovRewardProcess load_mrp(const std::string& path) {
  return parse_mrp(load_json_file(path), path);
}

inline Json mrp_to_json(const MarkovRewardProcess& mrp) {
  return Json{{"transition", matrix_to_json(mrp.transition)},
              {"reward", vector_to_json(mrp.reward)},
              {"discount", mrp.discount}};
}

// Feature description: either the string "identity" or an array of
// per-state rows.
inline FeatureMap parse_features(const Json& j, int n_states, bool strict = false,
                                 const std::string& where = "features") {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "identity") return FeatureMap::identity(n_states);
    throw SpecError(unknown_key_message(s, {"identity"}, where));
  }
  Eigen::MatrixXd phi = parse_matrix(j, where);
  if (phi.rows() != n_states) {
    throw DimensionMismatch(where + " has " + std::to_string(phi.rows()) +
                            " rows, chain has " + std::to_string(n_states) + " states");
  }
  return FeatureMap(std::move(phi), strict);
}

inline Json features_to_json(const FeatureMap& features) {
  return matrix_to_json(features.matrix());
}

}  // namespace tdlab
