#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace sppiv {

namespace io {
class Writer;
class Reader;
}  // namespace io

/// Regular vector grid with an immutable exclusion mask.
///
/// Active (unmasked) points are numbered in row-major order (ix fastest).
/// That numbering is the row order of every stacked u/v vector in the
/// library: rows [0, n_active) hold u, rows [n_active, 2 n_active) hold v.
class Grid {
 public:
  Grid(int nx, int ny, double dx, double dy, std::vector<bool> mask = {});

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  int size() const { return nx_ * ny_; }
  int n_active() const { return static_cast<int>(active_to_cell_.size()); }

  bool masked(int cell) const { return mask_[static_cast<std::size_t>(cell)]; }
  const std::vector<bool>& mask() const { return mask_; }

  /// Grid-cell (row-major linear) index of an active point.
  int cell_of(int active) const { return active_to_cell_[static_cast<std::size_t>(active)]; }
  /// Active index of a cell, or -1 when masked.
  int active_of(int cell) const { return cell_to_active_[static_cast<std::size_t>(cell)]; }

  int ix_of(int active) const { return cell_of(active) % nx_; }
  int iy_of(int active) const { return cell_of(active) / nx_; }
  /// Position relative to the grid origin (ix*dx, iy*dy).
  double x_of(int active) const { return ix_of(active) * dx_; }
  double y_of(int active) const { return iy_of(active) * dy_; }

  bool operator==(const Grid& other) const;

 private:
  int nx_, ny_;
  double dx_, dy_;
  std::vector<bool> mask_;
  std::vector<int> active_to_cell_;
  std::vector<int> cell_to_active_;
};

using GridPtr = std::shared_ptr<const Grid>;

bool same_grid(const GridPtr& a, const GridPtr& b);

struct VelocityField {
  GridPtr grid;
  Eigen::VectorXd u;
  Eigen::VectorXd v;

  VelocityField() = default;
  VelocityField(GridPtr g, Eigen::VectorXd u_, Eigen::VectorXd v_);
  /// Zero field on `g`.
  explicit VelocityField(GridPtr g);

  /// Stacked [u; v] column.
  Eigen::VectorXd stacked() const;
  static VelocityField unstack(GridPtr g, const Eigen::Ref<const Eigen::VectorXd>& x);
};

/// Mean-removed u/v snapshot ensemble, one column per snapshot.
struct SnapshotMatrix {
  GridPtr grid;
  Eigen::MatrixXd data;  // 2 n_active x N, column-major
  VelocityField mean_field;
  double dt = 0.0;

  int n_active() const { return grid->n_active(); }
  int snapshots() const { return static_cast<int>(data.cols()); }

  /// Column j with the mean added back.
  VelocityField field(int j) const;
};

/// Stacks `fields` column-wise and removes (and stores) their temporal mean.
SnapshotMatrix assemble(std::span<const VelocityField> fields, double dt);

/// Re-centres raw fields with a given (training) mean rather than their own.
SnapshotMatrix assemble_with_mean(std::span<const VelocityField> fields, double dt,
                                  const VelocityField& mean);

/// Columns [first, first+count) as a new matrix sharing grid and mean.
SnapshotMatrix slice_columns(const SnapshotMatrix& x, int first, int count);
/// Horizontal concatenation; all parts must share grid and mean.
SnapshotMatrix concat_columns(std::span<const SnapshotMatrix> parts);

/// Same raw fields expressed about `mean`.
SnapshotMatrix recenter(const SnapshotMatrix& x, const VelocityField& mean);
/// Same raw fields expressed about their own temporal mean.
SnapshotMatrix recenter(const SnapshotMatrix& x);

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_components(const SnapshotMatrix& x);
Eigen::MatrixXd restack(const Eigen::MatrixXd& u_block, const Eigen::MatrixXd& v_block);

// Snapshot container ("SPPIVSNP", version 1, little-endian).
void save_snapshots(std::ostream& os, const SnapshotMatrix& x);
SnapshotMatrix load_snapshots(std::istream& is);
void save_snapshots(const std::filesystem::path& path, const SnapshotMatrix& x);
SnapshotMatrix load_snapshots(const std::filesystem::path& path);

// Grids and single fields reuse the snapshot container with N = 0: a grid
// carries a zero mean block, a field is stored as the mean block.
void save_grid(std::ostream& os, const Grid& g);
GridPtr load_grid(std::istream& is);
void save_field(std::ostream& os, const VelocityField& f);
VelocityField load_field(std::istream& is);

// Grid block embedded in the basis/model containers: u32 nx, ny, n_active,
// f64 dx, dy, then the packed mask bitmap.
void write_grid_block(io::Writer& w, const Grid& g);
GridPtr read_grid_block(io::Reader& r);

/// CSV with header x,y,u,v; one row per active point.
void write_field_csv(std::ostream& os, const VelocityField& f);
void write_field_csv(const std::filesystem::path& path, const VelocityField& f);

}  // namespace sppiv
