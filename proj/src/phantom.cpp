#include "inpaint/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "inpaint/error.hpp"
#include "inpaint/rng.hpp"

namespace inpaint::phantom {

namespace {

// Stream ids for the independent parts of one phantom.
constexpr std::uint64_t kGeometryStream = 1;
constexpr std::uint64_t kTextureStream = 2;
constexpr std::uint64_t kLesionStream = 3;

std::vector<double> gaussian_taps(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    w[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += w[static_cast<std::size_t>(i + r)];
  }
  for (auto &v : w) v /= total;
  return w;
}

// Separable "same" filter with clamped edges.
void blur(std::vector<double> &v, const Dims3 &d, const std::vector<double> &taps) {
  const std::int64_t r = static_cast<std::int64_t>(taps.size() / 2);
  std::vector<double> tmp(v.size());
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? d[0] : d[0] * d[1]);
    for (std::int64_t z = 0; z < d[2]; ++z) {
      for (std::int64_t y = 0; y < d[1]; ++y) {
        for (std::int64_t x = 0; x < d[0]; ++x) {
          const std::int64_t p[3] = {x, y, z};
          const std::int64_t idx = x + d[0] * (y + d[1] * z);
          double acc = 0.0;
          for (std::int64_t k = -r; k <= r; ++k) {
            const std::int64_t q = std::clamp<std::int64_t>(p[axis] + k, 0, d[axis] - 1);
            acc += taps[static_cast<std::size_t>(k + r)] *
                   v[static_cast<std::size_t>(idx + (q - p[axis]) * stride)];
          }
          tmp[static_cast<std::size_t>(idx)] = acc;
        }
      }
    }
    v.swap(tmp);
  }
}

double shell_intensity(double rho) {
  if (rho < 0.45) return 0.85;
  if (rho < 0.78) return 0.6;
  if (rho < 0.9) return 0.3;
  return 0.95;
}

} // namespace

void PhantomSpec::validate() const {
  for (auto n : dims) {
    if (n < 8) fail(ErrorCode::ConfigError, "phantom dims must be >= 8");
  }
  if (!(semi_axis_min > 0.0 && semi_axis_min <= semi_axis_max && semi_axis_max <= 1.0)) {
    fail(ErrorCode::ConfigError, "need 0 < semi_axis_min <= semi_axis_max <= 1");
  }
  if (!(texture_sigma > 0.0) || !(texture_amplitude >= 0.0)) {
    fail(ErrorCode::ConfigError, "texture sigma must be > 0 and amplitude >= 0");
  }
  if (!(tumor_radius_min > 0.0 && tumor_radius_min <= tumor_radius_max)) {
    fail(ErrorCode::ConfigError, "need 0 < tumor_radius_min <= tumor_radius_max");
  }
  if (tumor_count != 1) {
    fail(ErrorCode::ConfigError, "tumor count must be 1");
  }
}

Phantom generate_phantom(const PhantomSpec &spec) {
  spec.validate();
  const Dims3 &d = spec.dims;
  Rng geo(spec.seed, kGeometryStream);

  std::array<double, 3> center{}, axes{};
  for (int a = 0; a < 3; ++a) {
    const double half = 0.5 * static_cast<double>(d[a]);
    center[a] = half - 0.5 + geo.uniform(-0.03, 0.03) * half;
    axes[a] = geo.uniform(spec.semi_axis_min, spec.semi_axis_max) * (half - 1.0);
  }
  const double radius = spec.tumor_radius_min == spec.tumor_radius_max
                            ? spec.tumor_radius_min
                            : geo.uniform(spec.tumor_radius_min, spec.tumor_radius_max);

  // A sphere of radius r centred in the ellipsoid with semi-axes (a - r) lies
  // inside the head; keep it in the inner 75% of that so it sits in tissue.
  std::array<double, 3> inner{};
  for (int a = 0; a < 3; ++a) {
    inner[a] = 0.75 * (axes[a] - radius);
    if (inner[a] <= 0.5) {
      fail(ErrorCode::SpecInfeasible, "tumor radius " + std::to_string(radius) +
                                          " does not fit inside the head");
    }
  }
  std::array<double, 3> tumor{};
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) {
      fail(ErrorCode::SpecInfeasible, "could not place the tumor");
    }
    double s = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double u = geo.uniform(-1.0, 1.0);
      tumor[a] = center[a] + u * inner[a];
      s += u * u;
    }
    if (s < 1.0) break;
  }

  const std::size_t n = static_cast<std::size_t>(d[0] * d[1] * d[2]);
  std::vector<double> texture(n);
  {
    Rng tex(spec.seed, kTextureStream);
    for (auto &v : texture) v = tex.normal();
    blur(texture, d, gaussian_taps(spec.texture_sigma));
    double ss = 0.0;
    for (double v : texture) ss += v * v;
    const double scale = spec.texture_amplitude / std::sqrt(std::max(ss / double(n), 1e-30));
    for (auto &v : texture) v *= scale;
  }

  Phantom out;
  out.healthy = Volume(d);
  out.mask = Volume(d);
  out.tumor_radius = radius;
  out.tumor_center = tumor;
  const double r2 = radius * radius;
  for (std::int64_t z = 0; z < d[2]; ++z) {
    for (std::int64_t y = 0; y < d[1]; ++y) {
      for (std::int64_t x = 0; x < d[0]; ++x) {
        const double p[3] = {double(x), double(y), double(z)};
        double rho2 = 0.0, t2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          const double u = (p[a] - center[a]) / axes[a];
          rho2 += u * u;
          t2 += (p[a] - tumor[a]) * (p[a] - tumor[a]);
        }
        if (rho2 >= 1.0) continue;
        const std::size_t i = static_cast<std::size_t>(out.healthy.index(x, y, z));
        const double v = shell_intensity(std::sqrt(rho2)) + texture[i];
        out.healthy.data()[i] = static_cast<float>(std::max(v, 0.05));
        if (t2 <= r2) out.mask.data()[i] = 1.0f;
      }
    }
  }

  Rng lesion(spec.seed, kLesionStream);
  const double shift = lesion.uniform(0.2, 0.5);
  std::vector<double> blurred(out.healthy.data().begin(), out.healthy.data().end());
  blur(blurred, d, gaussian_taps(1.0));
  out.diseased = out.healthy;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.mask.data()[i] > 0.5f) {
      out.diseased.data()[i] = static_cast<float>(blurred[i] + shift);
    }
  }
  out.healthy.name = "healthy";
  out.mask.name = "mask";
  out.diseased.name = "diseased";
  return out;
}

std::string sample_id(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phantom_%06llu", static_cast<unsigned long long>(seed));
  return buf;
}

std::vector<DatasetEntry> generate_dataset(int n, std::uint64_t base_seed, const PhantomSpec &spec,
                                           double val_fraction) {
  if (n < 1) {
    fail(ErrorCode::ConfigError, "dataset size must be >= 1");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    fail(ErrorCode::ConfigError, "val_fraction must be in [0, 1)");
  }
  const int n_val = static_cast<int>(std::floor(n * val_fraction));
  std::vector<DatasetEntry> out;
  for (int i = 0; i < n; ++i) {
    PhantomSpec s = spec;
    s.seed = base_seed + static_cast<std::uint64_t>(i);
    DatasetEntry e;
    e.seed = s.seed;
    e.id = sample_id(s.seed);
    e.split = i >= n - n_val ? "val" : "train";
    e.phantom = generate_phantom(s);
    e.sample.id = e.id;
    e.sample.image = prep::void_region(e.phantom.diseased, e.phantom.mask);
    e.sample.mask = e.phantom.mask;
    e.sample.target = e.phantom.healthy;
    out.push_back(std::move(e));
  }
  return out;
}

} // namespace inpaint::phantom
