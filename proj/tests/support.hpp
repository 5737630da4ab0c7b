#pragma once

#include "rtlmp/case_model.hpp"

#include <random>
#include <string>

namespace testing {

inline std::string data_path(const std::string& name) { return std::string(RTLMP_DATA_DIR) + "/" + name; }

inline rtlmp::CaseBundle load(const std::string& name) { return rtlmp::load_case(data_path(name)); }

inline rtlmp::Vector gaussian(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    rtlmp::Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
    return v;
}

}  // namespace testing
