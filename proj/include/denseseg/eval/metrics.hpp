#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "denseseg/io/volume.hpp"

namespace dseg {

/// Binary voxel mask, row-major over (D, H, W).
struct Mask {
  Dims3 dims{};
  std::vector<std::uint8_t> on;

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * dims[1] + y) * dims[2] + x;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : on) n += v != 0;
    return n;
  }
};

inline Mask class_mask(const LabelVolume& v, std::size_t cls) {
  Mask m{v.dims, std::vector<std::uint8_t>(v.labels.size())};
  for (std::size_t i = 0; i < v.labels.size(); ++i) m.on[i] = v.labels[i] == cls;
  return m;
}

inline void check_same_dims(const Dims3& a, const Dims3& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": dims " + dims_str(a) + " vs " + dims_str(b));
}

/// 2|P∩G| / (|P|+|G|) for class `cls`; 1.0 when both masks are empty.
inline double dice(const LabelVolume& pred, const LabelVolume& gt, std::size_t cls) {
  check_same_dims(pred.dims, gt.dims, "dice");
  if (pred.labels.size() != gt.labels.size()) throw ShapeError("dice: payload size mismatch");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool a = pred.labels[i] == cls;
    const bool b = gt.labels[i] == cls;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

using Voxel = std::array<std::size_t, 3>;

/// Mask voxels with at least one 6-neighbour outside the mask or the volume,
/// in raster order.
inline std::vector<Voxel> extract_surface(const Mask& m) {
  const auto& d = m.dims;
  std::vector<Voxel> out;
  auto inside = [&](std::size_t z, std::size_t y, std::size_t x) { return m.on[m.index(z, y, x)] != 0; };
  for (std::size_t z = 0; z < d[0]; ++z) {
    for (std::size_t y = 0; y < d[1]; ++y) {
      for (std::size_t x = 0; x < d[2]; ++x) {
        if (!inside(z, y, x)) continue;
        const bool edge = z == 0 || y == 0 || x == 0 || z + 1 == d[0] || y + 1 == d[1] || x + 1 == d[2];
        if (edge || !inside(z - 1, y, x) || !inside(z + 1, y, x) || !inside(z, y - 1, x) ||
            !inside(z, y + 1, x) || !inside(z, y, x - 1) || !inside(z, y, x + 1)) {
          out.push_back({z, y, x});
        }
      }
    }
  }
  return out;
}

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Lower envelope of parabolas f(q) + (s·(p − q))² along one line
/// (Felzenszwalb & Huttenlocher), in place.
inline void edt_line(double* f, std::size_t n, std::size_t step, double s, std::vector<double>& buf,
                     std::vector<std::size_t>& v, std::vector<double>& zb) {
  buf.resize(n);
  v.resize(n);
  zb.resize(n + 1);
  for (std::size_t i = 0; i < n; ++i) buf[i] = f[i * step];
  const double s2 = s * s;
  auto meet = [&](std::size_t q, std::size_t r) {
    const double a = buf[q] + s2 * static_cast<double>(q * q);
    const double b = buf[r] + s2 * static_cast<double>(r * r);
    return (a - b) / (2.0 * s2 * (static_cast<double>(q) - static_cast<double>(r)));
  };
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (buf[q] == kInf) continue;
    if (!any) {
      v[0] = q;
      zb[0] = -kInf;
      zb[1] = kInf;
      any = true;
      continue;
    }
    double x = meet(q, v[k]);
    while (x <= zb[k]) {
      --k;
      x = meet(q, v[k]);
    }
    ++k;
    v[k] = q;
    zb[k] = x;
    zb[k + 1] = kInf;
  }
  if (!any) return;
  k = 0;
  for (std::size_t p = 0; p < n; ++p) {
    while (zb[k + 1] < static_cast<double>(p)) ++k;
    const double dp = s * (static_cast<double>(p) - static_cast<double>(v[k]));
    f[p * step] = buf[v[k]] + dp * dp;
  }
}

/// Squared spacing-scaled distance from every voxel to the nearest site.
inline std::vector<double> squared_edt(const Dims3& d, const std::vector<Voxel>& sites, const Spacing3& sp) {
  const std::size_t n = dims_numel(d);
  std::vector<double> f(n, kInf);
  for (const auto& s : sites) f[(s[0] * d[1] + s[1]) * d[2] + s[2]] = 0.0;
  std::vector<double> buf, zb;
  std::vector<std::size_t> v;
  for (std::size_t y = 0; y < d[1]; ++y) {
    for (std::size_t x = 0; x < d[2]; ++x) edt_line(&f[y * d[2] + x], d[0], d[1] * d[2], sp[0], buf, v, zb);
  }
  for (std::size_t z = 0; z < d[0]; ++z) {
    for (std::size_t x = 0; x < d[2]; ++x) edt_line(&f[z * d[1] * d[2] + x], d[1], d[2], sp[1], buf, v, zb);
  }
  for (std::size_t z = 0; z < d[0]; ++z) {
    for (std::size_t y = 0; y < d[1]; ++y) edt_line(&f[(z * d[1] + y) * d[2]], d[2], 1, sp[2], buf, v, zb);
  }
  return f;
}

struct DirectedSums {
  double ab = 0.0, ba = 0.0;
  std::size_t na = 0, nb = 0;
};

inline std::optional<DirectedSums> surface_distance_sums(const Mask& a, const Mask& b, const Spacing3& sp) {
  check_same_dims(a.dims, b.dims, "surface distance");
  const auto sa = extract_surface(a);
  const auto sb = extract_surface(b);
  if (sa.empty() || sb.empty()) return std::nullopt;
  const auto da = squared_edt(a.dims, sa, sp);
  const auto db = squared_edt(b.dims, sb, sp);
  DirectedSums r;
  r.na = sa.size();
  r.nb = sb.size();
  for (const auto& p : sa) r.ab += std::sqrt(db[a.index(p[0], p[1], p[2])]);
  for (const auto& q : sb) r.ba += std::sqrt(da[b.index(q[0], q[1], q[2])]);
  return r;
}

}  // namespace detail

/// Modified Hausdorff distance (Dubuisson-Jain) between mask surfaces in mm;
/// nullopt when either mask is empty.
inline std::optional<double> mhd(const Mask& a, const Mask& b, const Spacing3& spacing) {
  const auto r = detail::surface_distance_sums(a, b, spacing);
  if (!r) return std::nullopt;
  return std::max(r->ab / static_cast<double>(r->na), r->ba / static_cast<double>(r->nb));
}

/// Symmetric average surface distance in mm; nullopt when either mask is empty.
inline std::optional<double> asd(const Mask& a, const Mask& b, const Spacing3& spacing) {
  const auto r = detail::surface_distance_sums(a, b, spacing);
  if (!r) return std::nullopt;
  return (r->ab + r->ba) / static_cast<double>(r->na + r->nb);
}

struct ClassMetrics {
  std::size_t cls = 0;
  double dsc = 0.0;
  std::optional<double> mhd_mm, asd_mm;  // nullopt: empty structure
};

struct MetricsReport {
  std::vector<ClassMetrics> classes;  // CSF, GM, WM
  double average_dsc = 0.0;

  std::string csv() const {
    std::ostringstream os;
    os << std::setprecision(9) << "class,dsc,mhd_mm,asd_mm\n";
    for (const auto& c : classes) {
      os << tissue_name(c.cls) << ',' << c.dsc << ',';
      if (c.mhd_mm) os << *c.mhd_mm; else os << "empty";
      os << ',';
      if (c.asd_mm) os << *c.asd_mm; else os << "empty";
      os << '\n';
    }
    os << "average," << average_dsc << ",,\n";
    return os.str();
  }
};

inline double average_dsc(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return values.empty() ? 0.0 : s / static_cast<double>(values.size());
}

/// DSC, MHD and ASD for CSF, GM and WM.
inline MetricsReport evaluate(const LabelVolume& pred, const LabelVolume& gt) {
  check_same_dims(pred.dims, gt.dims, "evaluate");
  if (pred.spacing != gt.spacing) throw ShapeError("evaluate: spacing of prediction and ground truth differ");
  MetricsReport rep;
  std::vector<double> dscs;
  for (std::size_t c = 1; c < kNumTissueClasses; ++c) {
    ClassMetrics m;
    m.cls = c;
    m.dsc = dice(pred, gt, c);
    const auto pa = class_mask(pred, c);
    const auto ga = class_mask(gt, c);
    if (auto r = detail::surface_distance_sums(pa, ga, gt.spacing)) {
      m.mhd_mm = std::max(r->ab / static_cast<double>(r->na), r->ba / static_cast<double>(r->nb));
      m.asd_mm = (r->ab + r->ba) / static_cast<double>(r->na + r->nb);
    }
    dscs.push_back(m.dsc);
    rep.classes.push_back(m);
  }
  rep.average_dsc = average_dsc(dscs);
  return rep;
}

inline void print_metrics(std::ostream& os, const MetricsReport& r) {
  auto dist = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) s << std::fixed << std::setprecision(3) << *v; else s << "empty";
    return s.str();
  };
  os << std::left << std::setw(8) << "class" << std::right << std::setw(10) << "DSC" << std::setw(12)
     << "MHD(mm)" << std::setw(12) << "ASD(mm)" << '\n';
  for (const auto& c : r.classes) {
    os << std::left << std::setw(8) << tissue_name(c.cls) << std::right << std::fixed << std::setprecision(4)
       << std::setw(10) << c.dsc << std::setw(12) << dist(c.mhd_mm) << std::setw(12) << dist(c.asd_mm)
       << '\n';
  }
  os << std::left << std::setw(8) << "average" << std::right << std::setw(10) << std::fixed
     << std::setprecision(4) << r.average_dsc << '\n';
}

}  // namespace dseg
