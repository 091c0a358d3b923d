#include "helm/grid.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "helm/error.hpp"

namespace helm {

namespace {

constexpr char kFieldMagic[4] = {'H', 'F', 'F', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double x) {
  const auto v = std::bit_cast<std::uint64_t>(x);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(const unsigned char* b) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

bool Grid3::coarsenable() const {
  return std::all_of(n.begin(), n.end(), [](int v) { return v % 2 == 1 && v >= 5; });
}

Grid3 make_grid(int n1, int n2, int n3, double h, Point3 origin) {
  if (n1 < 3 || n2 < 3 || n3 < 3) {
    std::ostringstream os;
    os << "grid " << n1 << "x" << n2 << "x" << n3 << " needs at least 3 vertices per direction";
    throw Error(ErrorCode::DimensionTooSmall, "grid", os.str());
  }
  if (!(h > 0.0)) throw Error(ErrorCode::DimensionTooSmall, "grid", "grid spacing must be positive");
  return Grid3{{n1, n2, n3}, h, origin, 0};
}

Grid3 coarsen(const Grid3& g) {
  for (int a = 0; a < 3; ++a) {
    if (g.n[a] % 2 == 0) {
      std::ostringstream os;
      os << "dimension " << a + 1 << " has even vertex count " << g.n[a];
      throw Error(ErrorCode::NotCoarsenable, "grid", os.str());
    }
    if (g.n[a] < 5)
      throw Error(ErrorCode::DimensionTooSmall, "grid", "coarsening would leave fewer than 3 vertices");
  }
  Grid3 c = g;
  for (int a = 0; a < 3; ++a) c.n[a] = (g.n[a] + 1) / 2;
  c.h = 2.0 * g.h;
  c.level = g.level + 1;
  return c;
}

const char* face_name(Face f) {
  switch (f) {
    case Face::XLow: return "x-low";
    case Face::XHigh: return "x-high";
    case Face::YLow: return "y-low";
    case Face::YHigh: return "y-high";
    case Face::ZLow: return "z-low";
    case Face::ZHigh: return "z-high";
  }
  return "?";
}

HaloField::HaloField(const BlockExtent& extent)
    : extent_(extent),
      sx_(static_cast<std::size_t>(extent.nx() + 2)),
      sy_(static_cast<std::size_t>(extent.ny() + 2)) {
  if (extent.empty()) throw Error(ErrorCode::ShapeMismatch, "grid", "empty block extent");
  data_.assign(sx_ * sy_ * static_cast<std::size_t>(extent.nz() + 2), cplx{});
  halo_valid_.fill(true);
}

bool HaloField::halo_valid(Face f) const {
  return extent_.on_physical_boundary(f) || halo_valid_[static_cast<int>(f)];
}

bool HaloField::halo_current() const {
  for (Face f : kAllFaces)
    if (!halo_valid(f)) return false;
  return true;
}

void HaloField::fill(cplx value) { std::fill(data_.begin(), data_.end(), value); }

std::vector<cplx> HaloField::owned_values() const {
  std::vector<cplx> out;
  out.reserve(extent_.num_owned());
  for (int k = 1; k <= nz(); ++k)
    for (int j = 1; j <= ny(); ++j)
      for (int i = 1; i <= nx(); ++i) out.push_back((*this)(i, j, k));
  return out;
}

void HaloField::set_owned_values(std::span<const cplx> values) {
  if (values.size() != extent_.num_owned())
    throw Error(ErrorCode::ShapeMismatch, "grid", "owned value count does not match block");
  std::size_t p = 0;
  for (int k = 1; k <= nz(); ++k)
    for (int j = 1; j <= ny(); ++j)
      for (int i = 1; i <= nx(); ++i) (*this)(i, j, k) = values[p++];
  invalidate_halo();
}

void write_field_file(const std::filesystem::path& path, const HaloField& field) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "grid", "cannot open " + path.string() + " for writing");
  os.write(kFieldMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(field.nx()));
  put_u32(os, static_cast<std::uint32_t>(field.ny()));
  put_u32(os, static_cast<std::uint32_t>(field.nz()));
  for (int k = 1; k <= field.nz(); ++k)
    for (int j = 1; j <= field.ny(); ++j)
      for (int i = 1; i <= field.nx(); ++i) {
        put_f64(os, field(i, j, k).real());
        put_f64(os, field(i, j, k).imag());
      }
  if (!os) throw Error(ErrorCode::Io, "grid", "write failed for " + path.string());
}

HaloField read_field_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "grid", "cannot open " + path.string());
  unsigned char header[16];
  if (!is.read(reinterpret_cast<char*>(header), 16))
    throw Error(ErrorCode::SizeMismatch, "grid", "truncated field header in " + path.string());
  if (!std::equal(header, header + 4, kFieldMagic))
    throw Error(ErrorCode::Io, "grid", "bad field file magic in " + path.string());
  const Index3 n{static_cast<int>(get_u32(header + 4)), static_cast<int>(get_u32(header + 8)),
                 static_cast<int>(get_u32(header + 12))};
  if (n[0] < 1 || n[1] < 1 || n[2] < 1)
    throw Error(ErrorCode::SizeMismatch, "grid", "field file has an empty dimension");
  HaloField field(BlockExtent{{1, 1, 1}, n, n});
  std::vector<unsigned char> buf(field.extent().num_owned() * 16);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw Error(ErrorCode::SizeMismatch, "grid", "truncated field data in " + path.string());
  std::size_t p = 0;
  for (int k = 1; k <= n[2]; ++k)
    for (int j = 1; j <= n[1]; ++j)
      for (int i = 1; i <= n[0]; ++i, p += 16)
        field(i, j, k) = {get_f64(buf.data() + p), get_f64(buf.data() + p + 8)};
  return field;
}

}  // namespace helm
