#include "sppiv/sensors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "sppiv/binary_io.hpp"
#include "sppiv/error.hpp"

namespace sppiv {

namespace {

double det2(const Eigen::Matrix2d& m) { return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0); }

/// Inverse of a symmetric Gram matrix with a 1e-12 trace/n ridge when it is
/// numerically singular.
Eigen::MatrixXd gram_inverse(const Eigen::MatrixXd& g) {
  const Eigen::Index n = g.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  if (llt.info() == Eigen::Success) {
    const Eigen::VectorXd d = llt.matrixL().toDenseMatrix().diagonal();
    // Cholesky succeeded but the matrix may still be rank deficient.
    if (d.minCoeff() > 1e-7 * d.maxCoeff()) return llt.solve(eye);
  }
  const double ridge = 1e-12 * g.trace() / static_cast<double>(n);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(g + std::max(ridge, std::numeric_limits<double>::min()) * eye);
  return ldlt.solve(eye);
}

}  // namespace

SensorSet SensorSet::prefix(int k) const {
  require(k >= 0 && k <= points(), ErrorCode::InvalidArgument, "prefix longer than the selection");
  SensorSet out;
  out.cells.assign(cells.begin(), cells.begin() + k);
  out.objective.assign(objective.begin(), objective.begin() + std::min<std::ptrdiff_t>(k, objective.size()));
  out.C = C.topRows(2 * k);
  out.grid = grid;
  return out;
}

Eigen::Matrix<double, 2, Eigen::Dynamic> candidate_block(const Eigen::MatrixXd& modes, const Grid& grid, int cell) {
  require(cell >= 0 && cell < grid.size(), ErrorCode::InvalidArgument, "grid index out of range");
  const int a = grid.active_of(cell);
  require(a >= 0, ErrorCode::InvalidArgument, "grid index " + std::to_string(cell) + " is masked");
  require(modes.rows() == 2 * grid.n_active(), ErrorCode::DimensionMismatch, "mode rows != 2*n_active");
  Eigen::Matrix<double, 2, Eigen::Dynamic> w(2, modes.cols());
  w.row(0) = modes.row(a);
  w.row(1) = modes.row(grid.n_active() + a);
  return w;
}

double fisher_objective(const Eigen::MatrixXd& C, int r) {
  if (C.rows() == 0) return 0.0;
  const Eigen::Index p = C.rows() / 2;
  const Eigen::MatrixXd gram = (2 * p <= r) ? Eigen::MatrixXd(C * C.transpose())
                                            : Eigen::MatrixXd(C.transpose() * C);
  return std::max(0.0, gram.partialPivLu().determinant());
}

Eigen::MatrixXd build_observation_matrix(const std::vector<int>& cells, const Eigen::MatrixXd& modes,
                                         const Grid& grid) {
  Eigen::MatrixXd C(2 * static_cast<Eigen::Index>(cells.size()), modes.cols());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    C.middleRows(2 * static_cast<Eigen::Index>(k), 2) = candidate_block(modes, grid, cells[k]);
  }
  return C;
}

double greedy_step_score(const Eigen::MatrixXd& c_prev, const Eigen::Matrix<double, 2, Eigen::Dynamic>& w, int k,
                         int r) {
  const Eigen::Index n = w.cols();
  if (c_prev.rows() == 0) return det2(w * w.transpose());
  if (2 * k <= r) {
    const Eigen::MatrixXd proj =
        Eigen::MatrixXd::Identity(n, n) - c_prev.transpose() * gram_inverse(c_prev * c_prev.transpose()) * c_prev;
    return det2(w * proj * w.transpose());
  }
  const Eigen::MatrixXd ginv = gram_inverse(c_prev.transpose() * c_prev);
  return det2(Eigen::Matrix2d::Identity() + w * ginv * w.transpose());
}

SensorSet greedy_select(const Eigen::MatrixXd& modes, const GridPtr& grid, int p) {
  const int n = grid->n_active();
  const int r = static_cast<int>(modes.cols());
  require(p >= 1 && p <= n, ErrorCode::InvalidArgument,
          "point count " + std::to_string(p) + " outside [1, " + std::to_string(n) + "]");
  require(modes.rows() == 2 * n, ErrorCode::DimensionMismatch, "mode rows != 2*n_active");

  // Rows split by component; candidate a's block is (u_rows.row(a); v_rows.row(a)).
  const Eigen::MatrixXd u_rows = modes.topRows(n);
  const Eigen::MatrixXd v_rows = modes.bottomRows(n);

  SensorSet out;
  out.grid = grid;
  out.C.resize(0, r);
  std::vector<bool> taken(static_cast<std::size_t>(n), false);

  for (int k = 1; k <= p; ++k) {
    // Precompute the r x r kernel M so each candidate costs O(r^2):
    // step 1 and the sk <= r branch use M = I - C^T (C C^T)^-1 C, the other
    // branch uses M = (C^T C)^-1 and adds the identity.
    Eigen::MatrixXd kernel;
    bool add_identity = false;
    if (out.C.rows() == 0) {
      kernel = Eigen::MatrixXd::Identity(r, r);
    } else if (2 * k <= r) {
      kernel = Eigen::MatrixXd::Identity(r, r) -
               out.C.transpose() * gram_inverse(out.C * out.C.transpose()) * out.C;
    } else {
      kernel = gram_inverse(out.C.transpose() * out.C);
      add_identity = true;
    }
    const Eigen::MatrixXd ku = u_rows * kernel;  // n x r
    const Eigen::MatrixXd kv = v_rows * kernel;

    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < n; ++a) {
      if (taken[static_cast<std::size_t>(a)]) continue;
      double m00 = ku.row(a).dot(u_rows.row(a));
      double m01 = ku.row(a).dot(v_rows.row(a));
      double m10 = kv.row(a).dot(u_rows.row(a));
      double m11 = kv.row(a).dot(v_rows.row(a));
      if (add_identity) {
        m00 += 1.0;
        m11 += 1.0;
      }
      const double score = m00 * m11 - m01 * m10;
      if (score > best_score) {
        best_score = score;
        best = a;
      }
    }
    taken[static_cast<std::size_t>(best)] = true;
    const int cell = grid->cell_of(best);
    out.cells.push_back(cell);
    out.C.conservativeResize(out.C.rows() + 2, Eigen::NoChange);
    out.C.bottomRows(2) = candidate_block(modes, *grid, cell);
    out.objective.push_back(fisher_objective(out.C, r));
  }
  return out;
}

SensorSet greedy_select(const PodBasis& basis, int p) { return greedy_select(basis.modes, basis.grid, p); }

SensorSet random_select(const PodBasis& basis, int p, std::uint64_t seed) {
  const int n = basis.grid->n_active();
  require(p >= 1 && p <= n, ErrorCode::InvalidArgument, "point count out of range");
  std::vector<int> active(static_cast<std::size_t>(n));
  std::iota(active.begin(), active.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(active.begin(), active.end(), rng);
  std::vector<int> cells;
  for (int k = 0; k < p; ++k) cells.push_back(basis.grid->cell_of(active[static_cast<std::size_t>(k)]));
  return sensors_from_cells(basis, std::move(cells));
}

SensorSet sensors_from_cells(const PodBasis& basis, std::vector<int> cells) {
  std::vector<int> sorted = cells;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorCode::InvalidArgument,
          "duplicate processing point");
  SensorSet out;
  out.grid = basis.grid;
  out.C = build_observation_matrix(cells, basis.modes, *basis.grid);
  for (std::size_t k = 1; k <= cells.size(); ++k) {
    out.objective.push_back(fisher_objective(out.C.topRows(2 * static_cast<Eigen::Index>(k)), basis.rank()));
  }
  out.cells = std::move(cells);
  return out;
}

void write_sensors_csv(std::ostream& os, const SensorSet& s) {
  os << "step,grid_index,x,y,objective_value\n" << std::setprecision(17);
  for (int k = 0; k < s.points(); ++k) {
    const int cell = s.cells[static_cast<std::size_t>(k)];
    const int a = s.grid->active_of(cell);
    os << k + 1 << ',' << cell << ',' << s.grid->x_of(a) << ',' << s.grid->y_of(a) << ','
       << (static_cast<std::size_t>(k) < s.objective.size() ? s.objective[static_cast<std::size_t>(k)] : 0.0) << '\n';
  }
}

void write_sensors_csv(const std::filesystem::path& path, const SensorSet& s) {
  auto os = io::open_out(path, false);
  write_sensors_csv(os, s);
}

std::vector<int> read_sensor_cells(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("step,grid_index", 0) != 0) {
    fail(ErrorCode::CorruptContainer, "sensor CSV lacks the step,grid_index header");
  }
  std::vector<int> cells;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string step, cell;
    if (!std::getline(row, step, ',') || !std::getline(row, cell, ',')) {
      fail(ErrorCode::CorruptContainer, "malformed sensor CSV row: " + line);
    }
    try {
      cells.push_back(std::stoi(cell));
    } catch (const std::exception&) {
      fail(ErrorCode::CorruptContainer, "malformed sensor CSV row: " + line);
    }
  }
  return cells;
}

std::vector<int> read_sensor_cells(const std::filesystem::path& path) {
  auto is = io::open_in(path, false);
  return read_sensor_cells(is);
}

}  // namespace sppiv
