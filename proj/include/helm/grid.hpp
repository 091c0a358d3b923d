#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace helm {

using cplx = std::complex<double>;
using Index3 = std::array<int, 3>;
using Point3 = std::array<double, 3>;

/// Vertex-centered structured grid. Vertex counts include the physical
/// boundary vertices; vertex (1,1,1) sits at `origin`.
struct Grid3 {
  Index3 n{};
  double h = 0.0;
  Point3 origin{};
  int level = 0;

  double coord(int axis, int i) const { return origin[axis] + h * (i - 1); }
  Point3 point(const Index3& g) const { return {coord(0, g[0]), coord(1, g[1]), coord(2, g[2])}; }
  std::size_t num_vertices() const {
    return static_cast<std::size_t>(n[0]) * static_cast<std::size_t>(n[1]) *
           static_cast<std::size_t>(n[2]);
  }
  /// Standard coarsening needs odd counts, and the result must stay >= 3.
  bool coarsenable() const;
  /// Finest-level index of vertex `i` along one axis (levels coarsen by 2).
  int fine_index(int i) const { return ((i - 1) << level) + 1; }

  bool operator==(const Grid3&) const = default;
};

Grid3 make_grid(int n1, int n2, int n3, double h, Point3 origin = {0.0, 0.0, 0.0});

/// n -> (n+1)/2, h -> 2h, same origin.
Grid3 coarsen(const Grid3& g);

enum class Face { XLow = 0, XHigh = 1, YLow = 2, YHigh = 3, ZLow = 4, ZHigh = 5 };

inline constexpr std::array<Face, 6> kAllFaces{Face::XLow, Face::XHigh, Face::YLow,
                                               Face::YHigh, Face::ZLow, Face::ZHigh};

constexpr int face_axis(Face f) { return static_cast<int>(f) / 2; }
constexpr bool face_is_high(Face f) { return static_cast<int>(f) % 2 == 1; }
constexpr Face opposite(Face f) { return static_cast<Face>(static_cast<int>(f) ^ 1); }
const char* face_name(Face f);

/// Inclusive global index range owned by one worker, plus the global grid
/// counts so physical-boundary faces can be recognised locally.
struct BlockExtent {
  static constexpr int lap = 1;

  Index3 lo{1, 1, 1};
  Index3 hi{1, 1, 1};
  Index3 global{1, 1, 1};

  static BlockExtent whole(const Grid3& g) { return {{1, 1, 1}, g.n, g.n}; }

  int count(int axis) const { return hi[axis] - lo[axis] + 1; }
  int nx() const { return count(0); }
  int ny() const { return count(1); }
  int nz() const { return count(2); }
  std::size_t num_owned() const {
    return static_cast<std::size_t>(nx()) * static_cast<std::size_t>(ny()) *
           static_cast<std::size_t>(nz());
  }
  bool empty() const { return nx() <= 0 || ny() <= 0 || nz() <= 0; }

  /// True when the face coincides with the boundary of the global grid.
  bool on_physical_boundary(Face f) const {
    const int a = face_axis(f);
    return face_is_high(f) ? hi[a] == global[a] : lo[a] == 1;
  }

  bool owns(const Index3& g) const {
    for (int a = 0; a < 3; ++a)
      if (g[a] < lo[a] || g[a] > hi[a]) return false;
    return true;
  }

  std::optional<Index3> global_to_local(const Index3& g) const {
    if (!owns(g)) return std::nullopt;
    return Index3{g[0] - lo[0] + 1, g[1] - lo[1] + 1, g[2] - lo[2] + 1};
  }

  Index3 local_to_global(const Index3& l) const {
    return {l[0] + lo[0] - 1, l[1] + lo[1] - 1, l[2] + lo[2] - 1};
  }

  bool operator==(const BlockExtent&) const = default;
};

/// Complex field on one block, with a one-point ghost layer on every side.
/// Local indices run 0..n+1 per axis; 1..n is the owned region. Storage is
/// i1 fastest, then i2, then i3.
class HaloField {
 public:
  HaloField() = default;
  explicit HaloField(const BlockExtent& extent);

  const BlockExtent& extent() const { return extent_; }
  int nx() const { return extent_.nx(); }
  int ny() const { return extent_.ny(); }
  int nz() const { return extent_.nz(); }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           sx_ * (static_cast<std::size_t>(j) + sy_ * static_cast<std::size_t>(k));
  }
  cplx& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
  const cplx& operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }

  /// Strides (in elements) between neighbours in i2 and i3.
  std::size_t stride_j() const { return sx_; }
  std::size_t stride_k() const { return sx_ * sy_; }

  std::span<cplx> raw() { return data_; }
  std::span<const cplx> raw() const { return data_; }

  bool same_shape(const HaloField& o) const { return extent_ == o.extent_; }

  /// Ghost validity for faces that border another block. Physical-boundary
  /// faces are never read and always report valid.
  bool halo_valid(Face f) const;
  bool halo_current() const;
  void set_halo_valid(Face f, bool valid) { halo_valid_[static_cast<int>(f)] = valid; }
  void mark_halo_valid() { halo_valid_.fill(true); }
  void invalidate_halo() { halo_valid_.fill(false); }

  /// Sets every entry, ghosts included.
  void fill(cplx value);

  /// Owned region copied out in file order (i1 fastest).
  std::vector<cplx> owned_values() const;
  void set_owned_values(std::span<const cplx> values);

 private:
  BlockExtent extent_{};
  std::size_t sx_ = 0;
  std::size_t sy_ = 0;
  std::vector<cplx> data_;
  std::array<bool, 6> halo_valid_{};
};

/// Field file: "HFF1" + u32 n1,n2,n3 (little endian), then owned complex
/// doubles (re, im) in i1-fastest order.
void write_field_file(const std::filesystem::path& path, const HaloField& field);
HaloField read_field_file(const std::filesystem::path& path);

}  // namespace helm
