#include <doctest.h>

#include <cmath>

#include "inpaint/error.hpp"
#include "inpaint/metrics.hpp"
#include "inpaint/preprocess.hpp"
#include "inpaint/rng.hpp"

using namespace inpaint;
using namespace inpaint::metrics;

namespace {

Volume random_volume(Dims3 d, std::uint64_t seed) {
  Volume v(d);
  Rng r(seed);
  for (auto &x : v.data()) x = static_cast<float>(r.uniform());
  return v;
}

std::vector<double> gauss(std::int64_t n, double sigma) {
  std::vector<double> w;
  double t = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = i - (n - 1) / 2.0;
    w.push_back(std::exp(-d * d / (2 * sigma * sigma)));
    t += w.back();
  }
  for (auto &v : w) v /= t;
  return w;
}

// Sliding 3D window with the full product kernel at every valid position.
double naive_ssim(const Volume &a, const Volume &b, double L, Dims3 ext, double sigma) {
  const auto &d = a.dims();
  const auto wx = gauss(ext[0], sigma), wy = gauss(ext[1], sigma), wz = gauss(ext[2], sigma);
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double total = 0.0;
  int count = 0;
  for (std::int64_t z = 0; z + ext[2] <= d[2]; ++z)
    for (std::int64_t y = 0; y + ext[1] <= d[1]; ++y)
      for (std::int64_t x = 0; x + ext[0] <= d[0]; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::int64_t k = 0; k < ext[2]; ++k)
          for (std::int64_t j = 0; j < ext[1]; ++j)
            for (std::int64_t i = 0; i < ext[0]; ++i) {
              const double w = wx[i] * wy[j] * wz[k];
              const double p = a.at(x + i, y + j, z + k), q = b.at(x + i, y + j, z + k);
              mx += w * p;
              my += w * q;
              sxx += w * p * p;
              syy += w * q * q;
              sxy += w * p * q;
            }
        const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return total / count;
}

Box whole_box(const Volume &v) { return Box{{0, 0, 0}, v.dims()}; }

} // namespace

TEST_CASE("mse and psnr basics") {
  const Volume a = random_volume({6, 6, 6}, 1);
  CHECK(mse(a, a, Region::whole()) == 0.0);
  CHECK(psnr(a, a, Region::whole(), 1.0) == kPsnrCap);
  Volume b = a;
  for (auto &x : b.data()) x = static_cast<float>(x + 0.1);
  CHECK(mse(b, a, Region::whole()) == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(psnr_from_mse(0.01, 1.0) == doctest::Approx(20.0).epsilon(1e-14));
  CHECK(psnr_from_mse(0.0, 1.0) == 100.0);
}

TEST_CASE("mse over random pairs and mask regions matches a direct loop") {
  for (int c = 0; c < 10; ++c) {
    const Dims3 d{8 + c % 3, 9, 10};
    const Volume a = random_volume(d, 10 + c), b = random_volume(d, 50 + c);
    Volume m(d);
    Rng r(90 + c);
    for (auto &x : m.data()) x = r.uniform() < 0.3 ? 1.0f : 0.0f;
    double all = 0, in = 0;
    int n = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
      const double e = double(a.data()[i]) - double(b.data()[i]);
      all += e * e;
      if (m.data()[i] > 0.5f) in += e * e, ++n;
    }
    CHECK(std::abs(mse(a, b, Region::whole()) - all / a.size()) < 1e-10);
    CHECK(std::abs(mse(a, b, Region::voxels(m)) - in / n) < 1e-10);
  }
}

TEST_CASE("ssim matches a brute-force sliding window") {
  for (int c = 0; c < 5; ++c) {
    const Dims3 d{8 + c, 8, 9};
    const Volume a = random_volume(d, 100 + c), b = random_volume(d, 200 + c);
    CHECK(std::abs(ssim(a, b, whole_box(a), 1.0) - naive_ssim(a, b, 1.0, {7, 7, 7}, 1.5)) < 1e-6);
  }
  const Volume s = random_volume({16, 16, 1}, 7), t = random_volume({16, 16, 1}, 8);
  CHECK(std::abs(ssim(s, t, whole_box(s), 1.0, SsimWindow::slice()) -
                 naive_ssim(s, t, 1.0, {11, 11, 1}, 1.5)) < 1e-6);
}

TEST_CASE("ssim properties") {
  const Volume a = random_volume({10, 10, 10}, 3), b = random_volume({10, 10, 10}, 4);
  CHECK(ssim(a, a, whole_box(a), 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, b, whole_box(a), 1.0) == doctest::Approx(ssim(b, a, whole_box(a), 1.0)).epsilon(1e-14));
  CHECK(ssim(a, b, whole_box(a), 1.0) < 1.0);
  // More noise, lower SSIM.
  double prev = 1.0;
  for (double amp : {0.05, 0.2, 0.8}) {
    Volume n = a;
    Rng r(5);
    for (auto &x : n.data()) x = static_cast<float>(x + amp * r.normal());
    const double v = ssim(n, a, whole_box(a), 1.0);
    CHECK(v < prev);
    prev = v;
  }
  try {
    ssim(a, b, Box{{0, 0, 0}, {5, 10, 10}}, 1.0);
    FAIL("expected RegionTooSmall");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::RegionTooSmall);
  }
}

TEST_CASE("evaluate_sample on a composed identity prediction") {
  const Volume ref = random_volume({12, 12, 12}, 9);
  Volume m({12, 12, 12});
  for (std::int64_t z = 4; z < 7; ++z)
    for (std::int64_t y = 4; y < 7; ++y)
      for (std::int64_t x = 4; x < 7; ++x) m.at(x, y, z) = 1.0f;
  const Volume pred = prep::compose_output(ref, m, ref);
  const MetricsResult r = evaluate_sample(pred, ref, m);
  CHECK(r.mse == 0.0);
  CHECK(r.psnr == 100.0);
  CHECK(std::abs(r.ssim - 1.0) < 1e-9);
  const Box bb = mask_bounding_box(m);
  CHECK(bb.lo == Dims3{4, 4, 4});
  CHECK(bb.hi == Dims3{7, 7, 7});
  const Box grown = dilate_to(bb, {7, 7, 7}, m.dims());
  for (int a = 0; a < 3; ++a) CHECK(grown.extent(a) == 7);
  CHECK_THROWS_AS(mask_bounding_box(Volume({4, 4, 4})), Error);
}

TEST_CASE("aggregation and table layout") {
  const Summary s = summarize({1, 2, 3});
  CHECK(s.mean == 2.0);
  CHECK(s.std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
  CHECK(summarize({0.5}).std == 0.0);
  CHECK_THROWS_AS(summarize({}), Error);

  MetricsReport rep;
  rep.model = "Baseline";
  rep.ssim = {0.8125, 0.1375};
  rep.psnr = {21.5, 3.25};
  rep.mse = {0.0123, 0.0045};
  const std::string row = render_row(rep);
  CHECK(row.find("0.8125 ± 0.1375") != std::string::npos);
  CHECK(row.find("21.5000 ± 3.2500") != std::string::npos);
  CHECK(row.find("Baseline") == 0);

  MetricsReport other = rep;
  other.model = "3D Palette";
  other.ssim = {0.7, 0.0};
  const std::string table = render_table({rep, other});
  const auto rows = parse_table(table);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].model == "Baseline");
  CHECK(rows[1].model == "3D Palette");
  CHECK(rows[0].ssim.mean == doctest::Approx(0.8125));
  CHECK(rows[0].psnr.std == doctest::Approx(3.25));
  CHECK(rows[1].ssim.std == 0.0);
  CHECK(table.rfind("Model", 0) == 0);

  std::vector<MetricsResult> results(3);
  for (int i = 0; i < 3; ++i) {
    results[i].sample_id = "s" + std::to_string(i);
    results[i].ssim = i + 1;
  }
  const auto agg = aggregate(results, "m");
  CHECK(agg.ssim.mean == 2.0);
  const std::string csv = render_csv({agg});
  CHECK(csv.rfind("sample_id,model,ssim,psnr_db,mse,region\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
