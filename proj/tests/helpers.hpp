#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "censura/dataset.hpp"
#include "censura/random.hpp"

namespace censura::testing {

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-12) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("censura_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Small dataset with given labels/masks, one feature equal to the row index
/// and one date per row.
inline CensoredDataset toy_dataset(const std::vector<double>& labels, const std::vector<int>& masks,
                                   std::size_t dim = 1) {
  const std::size_t n = labels.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<Censoring> m;
  std::vector<Date> dates;
  std::vector<std::string> ids;
  const Date start = *parse_iso_date("2020-01-01");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(i + j);
    m.push_back(censoring_from_int(masks[i]));
    dates.push_back(start + std::chrono::days(static_cast<long>(i)));
    ids.push_back("r" + std::to_string(i));
  }
  return CensoredDataset(x, labels, m, dates, ids);
}

/// Random dataset: features U(-1,1), labels 6 + x0 + noise, masks drawn with
/// the given censoring probabilities.
inline CensoredDataset random_dataset(std::size_t n, std::size_t dim, std::uint64_t seed, double p_left = 0.0,
                                      double p_right = 0.0) {
  CounterRng rng(seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<double> y(n);
  std::vector<Censoring> m(n);
  std::vector<Date> dates;
  std::vector<std::string> ids;
  const Date start = *parse_iso_date("2019-06-01");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.uniform(-1, 1);
    y[i] = 6.0 + x(static_cast<Eigen::Index>(i), 0) + 0.2 * rng.normal();
    const double u = rng.uniform();
    m[i] = u < p_left ? Censoring::left : (u < p_left + p_right ? Censoring::right : Censoring::observed);
    dates.push_back(start + std::chrono::days(static_cast<long>(i)));
    ids.push_back("c" + std::to_string(i));
  }
  return CensoredDataset(x, y, m, dates, ids);
}

}  // namespace censura::testing
