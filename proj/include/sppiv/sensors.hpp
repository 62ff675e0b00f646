#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "sppiv/pod.hpp"

namespace sppiv {

/// Processing points in selection order plus the matching observation matrix.
///
/// `cells` are grid-cell (row-major) indices of unmasked points. Rows of C
/// are interleaved per point: u-row then v-row.
struct SensorSet {
  std::vector<int> cells;
  std::vector<double> objective;  // Fisher objective of C_k after each step
  Eigen::MatrixXd C;              // 2p x r
  GridPtr grid;

  int points() const { return static_cast<int>(cells.size()); }
  /// First k points of the selection (greedy selections are prefix-closed).
  SensorSet prefix(int k) const;
};

/// 2 x r block of U rows (u then v) for grid cell `cell`.
Eigen::Matrix<double, 2, Eigen::Dynamic> candidate_block(const Eigen::MatrixXd& modes, const Grid& grid, int cell);

/// |C C^T| while 2p <= r, otherwise |C^T C|; 0 for an empty or singular Gram.
double fisher_objective(const Eigen::MatrixXd& C, int r);

Eigen::MatrixXd build_observation_matrix(const std::vector<int>& cells, const Eigen::MatrixXd& modes,
                                         const Grid& grid);

/// Value of the greedy step criterion for candidate block `w` given the
/// rows already selected (`c_prev`, possibly empty), at step `k` (1-based).
double greedy_step_score(const Eigen::MatrixXd& c_prev, const Eigen::Matrix<double, 2, Eigen::Dynamic>& w, int k,
                         int r);

/// Greedy D-optimal vector-sensor selection. Ties go to the lowest cell index.
SensorSet greedy_select(const Eigen::MatrixXd& modes, const GridPtr& grid, int p);
SensorSet greedy_select(const PodBasis& basis, int p);

/// Uniformly random distinct points, for baseline comparisons.
SensorSet random_select(const PodBasis& basis, int p, std::uint64_t seed);

/// Rebuilds a sensor set for `basis` from stored cell indices.
SensorSet sensors_from_cells(const PodBasis& basis, std::vector<int> cells);

/// CSV: step,grid_index,x,y,objective_value.
void write_sensors_csv(std::ostream& os, const SensorSet& s);
void write_sensors_csv(const std::filesystem::path& path, const SensorSet& s);
std::vector<int> read_sensor_cells(std::istream& is);
std::vector<int> read_sensor_cells(const std::filesystem::path& path);

}  // namespace sppiv
