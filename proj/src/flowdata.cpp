#include "sppiv/flowdata.hpp"

#include <cmath>
#include <fstream>
#include <array>
#include <iomanip>

#include "sppiv/binary_io.hpp"
#include "sppiv/error.hpp"

namespace sppiv {

Grid::Grid(int nx, int ny, double dx, double dy, std::vector<bool> mask)
    : nx_(nx), ny_(ny), dx_(dx), dy_(dy), mask_(std::move(mask)) {
  require(nx > 0 && ny > 0, ErrorCode::InvalidArgument, "grid needs nx, ny > 0");
  require(std::isfinite(dx) && std::isfinite(dy) && dx > 0 && dy > 0, ErrorCode::InvalidArgument,
          "grid spacing must be positive and finite");
  if (mask_.empty()) mask_.assign(static_cast<std::size_t>(nx * ny), false);
  require(mask_.size() == static_cast<std::size_t>(nx * ny), ErrorCode::DimensionMismatch,
          "mask size does not match nx*ny");
  cell_to_active_.assign(mask_.size(), -1);
  for (int c = 0; c < nx * ny; ++c) {
    if (mask_[static_cast<std::size_t>(c)]) continue;
    cell_to_active_[static_cast<std::size_t>(c)] = static_cast<int>(active_to_cell_.size());
    active_to_cell_.push_back(c);
  }
  require(!active_to_cell_.empty(), ErrorCode::InvalidArgument, "grid mask excludes every point");
}

bool Grid::operator==(const Grid& o) const {
  return nx_ == o.nx_ && ny_ == o.ny_ && dx_ == o.dx_ && dy_ == o.dy_ && mask_ == o.mask_;
}

bool same_grid(const GridPtr& a, const GridPtr& b) {
  if (a == b) return true;
  return a && b && *a == *b;
}

VelocityField::VelocityField(GridPtr g, Eigen::VectorXd u_, Eigen::VectorXd v_)
    : grid(std::move(g)), u(std::move(u_)), v(std::move(v_)) {
  require(grid != nullptr, ErrorCode::InvalidArgument, "velocity field without grid");
  require(u.size() == grid->n_active() && v.size() == grid->n_active(),
          ErrorCode::DimensionMismatch, "velocity field size does not match grid n_active");
  require(u.allFinite() && v.allFinite(), ErrorCode::NonFinite, "velocity field has non-finite values");
}

VelocityField::VelocityField(GridPtr g)
    : grid(std::move(g)),
      u(Eigen::VectorXd::Zero(grid->n_active())),
      v(Eigen::VectorXd::Zero(grid->n_active())) {}

Eigen::VectorXd VelocityField::stacked() const {
  Eigen::VectorXd x(u.size() + v.size());
  x << u, v;
  return x;
}

VelocityField VelocityField::unstack(GridPtr g, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const int n = g->n_active();
  require(x.size() == 2 * n, ErrorCode::DimensionMismatch, "stacked vector length != 2*n_active");
  return VelocityField(std::move(g), x.head(n), x.tail(n));
}

VelocityField SnapshotMatrix::field(int j) const {
  return VelocityField::unstack(grid, data.col(j) + mean_field.stacked());
}

namespace {

Eigen::MatrixXd stack_fields(std::span<const VelocityField> fields) {
  const GridPtr& g = fields.front().grid;
  const int n = g->n_active();
  Eigen::MatrixXd raw(2 * n, static_cast<Eigen::Index>(fields.size()));
  for (std::size_t j = 0; j < fields.size(); ++j) {
    const auto& f = fields[j];
    require(same_grid(f.grid, g), ErrorCode::GridMismatch, "snapshot " + std::to_string(j) + " is on a different grid");
    raw.col(static_cast<Eigen::Index>(j)) << f.u, f.v;
  }
  return raw;
}

}  // namespace

SnapshotMatrix assemble(std::span<const VelocityField> fields, double dt) {
  require(fields.size() >= 2, ErrorCode::InsufficientData, "assemble needs at least 2 snapshots");
  Eigen::MatrixXd raw = stack_fields(fields);
  const Eigen::VectorXd mean = raw.rowwise().mean();
  raw.colwise() -= mean;
  const GridPtr& g = fields.front().grid;
  return SnapshotMatrix{g, std::move(raw), VelocityField::unstack(g, mean), dt};
}

SnapshotMatrix assemble_with_mean(std::span<const VelocityField> fields, double dt,
                                  const VelocityField& mean) {
  require(!fields.empty(), ErrorCode::InsufficientData, "no snapshots");
  require(same_grid(fields.front().grid, mean.grid), ErrorCode::GridMismatch, "mean is on a different grid");
  Eigen::MatrixXd raw = stack_fields(fields);
  raw.colwise() -= mean.stacked();
  return SnapshotMatrix{mean.grid, std::move(raw), mean, dt};
}

SnapshotMatrix slice_columns(const SnapshotMatrix& x, int first, int count) {
  require(first >= 0 && count >= 0 && first + count <= x.snapshots(), ErrorCode::InvalidArgument,
          "column slice out of range");
  return SnapshotMatrix{x.grid, x.data.middleCols(first, count), x.mean_field, x.dt};
}

SnapshotMatrix concat_columns(std::span<const SnapshotMatrix> parts) {
  require(!parts.empty(), ErrorCode::InsufficientData, "nothing to concatenate");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(same_grid(p.grid, parts.front().grid), ErrorCode::GridMismatch, "concat across grids");
    cols += p.data.cols();
  }
  Eigen::MatrixXd out(parts.front().data.rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.data.cols()) = p.data;
    at += p.data.cols();
  }
  return SnapshotMatrix{parts.front().grid, std::move(out), parts.front().mean_field, parts.front().dt};
}

SnapshotMatrix recenter(const SnapshotMatrix& x, const VelocityField& mean) {
  require(same_grid(x.grid, mean.grid), ErrorCode::GridMismatch, "mean is on a different grid");
  SnapshotMatrix out{x.grid, x.data, mean, x.dt};
  out.data.colwise() += x.mean_field.stacked() - mean.stacked();
  return out;
}

SnapshotMatrix recenter(const SnapshotMatrix& x) {
  require(x.snapshots() >= 1, ErrorCode::InsufficientData, "no snapshots to average");
  const Eigen::VectorXd shift = x.data.rowwise().mean();
  SnapshotMatrix out{x.grid, x.data, VelocityField::unstack(x.grid, x.mean_field.stacked() + shift), x.dt};
  out.data.colwise() -= shift;
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_components(const SnapshotMatrix& x) {
  const int n = x.n_active();
  return {x.data.topRows(n), x.data.bottomRows(n)};
}

Eigen::MatrixXd restack(const Eigen::MatrixXd& u_block, const Eigen::MatrixXd& v_block) {
  require(u_block.rows() == v_block.rows() && u_block.cols() == v_block.cols(),
          ErrorCode::DimensionMismatch, "u and v blocks differ in shape");
  Eigen::MatrixXd x(2 * u_block.rows(), u_block.cols());
  x << u_block, v_block;
  return x;
}

// ---------------------------------------------------------------------------
// Container I/O

namespace {

constexpr std::string_view kSnapshotMagic = "SPPIVSNP";
constexpr std::uint32_t kSnapshotVersion = 1;

std::vector<std::uint8_t> pack_mask(const Grid& g) {
  std::vector<std::uint8_t> bits((static_cast<std::size_t>(g.size()) + 7) / 8, 0);
  for (int c = 0; c < g.size(); ++c) {
    if (g.masked(c)) bits[static_cast<std::size_t>(c) / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
  }
  return bits;
}

std::vector<bool> unpack_mask(const std::vector<std::uint8_t>& bits, std::size_t cells) {
  std::vector<bool> mask(cells);
  for (std::size_t c = 0; c < cells; ++c) mask[c] = (bits[c / 8] >> (c % 8)) & 1u;
  return mask;
}

void write_container(std::ostream& os, const Grid& g, const Eigen::VectorXd& mean,
                     const Eigen::MatrixXd& data, double dt) {
  io::Writer w(os);
  w.magic(kSnapshotMagic);
  w.u32(kSnapshotVersion);
  w.u32(static_cast<std::uint32_t>(g.nx()));
  w.u32(static_cast<std::uint32_t>(g.ny()));
  w.u32(static_cast<std::uint32_t>(data.cols()));
  w.u32(static_cast<std::uint32_t>(g.n_active()));
  w.f64(g.dx());
  w.f64(g.dy());
  w.f64(dt);
  w.bytes(pack_mask(g));
  w.f64s({mean.data(), static_cast<std::size_t>(mean.size())});
  w.f64s({data.data(), static_cast<std::size_t>(data.size())});
}

struct Container {
  GridPtr grid;
  Eigen::VectorXd mean;
  Eigen::MatrixXd data;
  double dt;
};

Container read_container(std::istream& is) {
  io::Reader r(is);
  r.expect_magic(kSnapshotMagic);
  r.expect_version(kSnapshotVersion);
  const auto nx = r.u32(), ny = r.u32(), n_snap = r.u32(), n_active = r.u32();
  const double dx = r.f64(), dy = r.f64(), dt = r.f64();
  require(nx > 0 && ny > 0 && static_cast<std::uint64_t>(nx) * ny < (1ull << 31), ErrorCode::DimensionMismatch,
          "implausible grid dimensions in header");
  io::check_finite(std::array{dx, dy, dt}, "header");
  const std::size_t cells = static_cast<std::size_t>(nx) * ny;
  auto mask = unpack_mask(r.bytes((cells + 7) / 8), cells);
  auto grid = std::make_shared<const Grid>(static_cast<int>(nx), static_cast<int>(ny), dx, dy, std::move(mask));
  require(static_cast<std::uint32_t>(grid->n_active()) == n_active, ErrorCode::DimensionMismatch,
          "header n_active disagrees with mask");

  const std::size_t rows = 2 * static_cast<std::size_t>(n_active);
  Eigen::VectorXd mean(static_cast<Eigen::Index>(rows));
  r.f64s({mean.data(), rows});

  // Whole missing columns are a dimension error; a ragged tail is corruption.
  const std::size_t col_bytes = rows * sizeof(double);
  const std::size_t want = col_bytes * n_snap;
  if (r.remaining() != want) {
    if (r.remaining() % col_bytes == 0) {
      fail(ErrorCode::DimensionMismatch, "header claims " + std::to_string(n_snap) + " snapshots, payload holds " +
                                             std::to_string(r.remaining() / col_bytes));
    }
    fail(ErrorCode::CorruptContainer, "corrupt container: payload size is not a whole number of snapshots");
  }
  Eigen::MatrixXd data(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_snap));
  r.f64s({data.data(), static_cast<std::size_t>(data.size())});
  io::check_finite({mean.data(), static_cast<std::size_t>(mean.size())}, "mean field");
  io::check_finite({data.data(), static_cast<std::size_t>(data.size())}, "snapshot data");
  return {std::move(grid), std::move(mean), std::move(data), dt};
}

}  // namespace

void write_grid_block(io::Writer& w, const Grid& g) {
  w.u32(static_cast<std::uint32_t>(g.nx()));
  w.u32(static_cast<std::uint32_t>(g.ny()));
  w.u32(static_cast<std::uint32_t>(g.n_active()));
  w.f64(g.dx());
  w.f64(g.dy());
  w.bytes(pack_mask(g));
}

GridPtr read_grid_block(io::Reader& r) {
  const auto nx = r.u32(), ny = r.u32(), n_active = r.u32();
  const double dx = r.f64(), dy = r.f64();
  require(nx > 0 && ny > 0 && static_cast<std::uint64_t>(nx) * ny < (1ull << 31), ErrorCode::DimensionMismatch,
          "implausible grid dimensions");
  io::check_finite(std::array{dx, dy}, "grid spacing");
  const std::size_t cells = static_cast<std::size_t>(nx) * ny;
  auto mask = unpack_mask(r.bytes((cells + 7) / 8), cells);
  auto grid = std::make_shared<const Grid>(static_cast<int>(nx), static_cast<int>(ny), dx, dy, std::move(mask));
  require(static_cast<std::uint32_t>(grid->n_active()) == n_active, ErrorCode::DimensionMismatch,
          "header n_active disagrees with mask");
  return grid;
}

void save_snapshots(std::ostream& os, const SnapshotMatrix& x) {
  write_container(os, *x.grid, x.mean_field.stacked(), x.data, x.dt);
}

SnapshotMatrix load_snapshots(std::istream& is) {
  auto c = read_container(is);
  auto mean = VelocityField::unstack(c.grid, c.mean);
  return SnapshotMatrix{c.grid, std::move(c.data), std::move(mean), c.dt};
}

void save_snapshots(const std::filesystem::path& path, const SnapshotMatrix& x) {
  auto os = io::open_out(path);
  save_snapshots(os, x);
}

SnapshotMatrix load_snapshots(const std::filesystem::path& path) {
  auto is = io::open_in(path);
  return load_snapshots(is);
}

void save_grid(std::ostream& os, const Grid& g) {
  write_container(os, g, Eigen::VectorXd::Zero(2 * g.n_active()), Eigen::MatrixXd(2 * g.n_active(), 0), 0.0);
}

GridPtr load_grid(std::istream& is) { return read_container(is).grid; }

void save_field(std::ostream& os, const VelocityField& f) {
  write_container(os, *f.grid, f.stacked(), Eigen::MatrixXd(2 * f.grid->n_active(), 0), 0.0);
}

VelocityField load_field(std::istream& is) {
  auto c = read_container(is);
  require(c.data.cols() == 0, ErrorCode::DimensionMismatch, "container holds snapshots, not a single field");
  return VelocityField::unstack(c.grid, c.mean);
}

void write_field_csv(std::ostream& os, const VelocityField& f) {
  os << "x,y,u,v\n" << std::setprecision(17);
  const Grid& g = *f.grid;
  for (int a = 0; a < g.n_active(); ++a) {
    os << g.x_of(a) << ',' << g.y_of(a) << ',' << f.u[a] << ',' << f.v[a] << '\n';
  }
}

void write_field_csv(const std::filesystem::path& path, const VelocityField& f) {
  auto os = io::open_out(path, false);
  write_field_csv(os, f);
}

}  // namespace sppiv
