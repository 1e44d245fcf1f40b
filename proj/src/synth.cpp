#include "pnn/synth.hpp"

#include <algorithm>
#include <cmath>

#include "pnn/rng.hpp"

namespace pnn {

namespace {

constexpr int kSide = 28;

struct Pt {
  double x, y;
};

using Poly = std::vector<Pt>;

void arc(Poly& poly, double cx, double cy, double rx, double ry, double a0,
         double a1, int steps = 22) {
  for (int i = 0; i <= steps; ++i) {
    const double a = a0 + (a1 - a0) * i / steps;
    poly.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
}

Poly ellipse(double cx, double cy, double rx, double ry) {
  Poly p;
  arc(p, cx, cy, rx, ry, 0, 2 * M_PI, 36);
  return p;
}

double seg_dist2(double px, double py, Pt a, Pt b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = px - a.x, wy = py - a.y;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
  return dx * dx + dy * dy;
}

// Unit-square digit skeletons, y pointing down. `variant` picks among a few
// handwriting styles per class.
std::vector<Poly> digit_strokes(int digit, int variant) {
  std::vector<Poly> s;
  switch (digit) {
    case 0:
      s.push_back(ellipse(0.5, 0.5, variant ? 0.22 : 0.26, 0.36));
      break;
    case 1:
      if (variant)
        s.push_back({{0.52, 0.12}, {0.52, 0.88}});  // plain stick
      else
        s.push_back({{0.36, 0.30}, {0.55, 0.12}, {0.55, 0.88}});
      break;
    case 2: {
      Poly top;
      arc(top, 0.5, 0.34, 0.24, 0.22, -M_PI, 0.25);
      top.push_back({0.30, 0.88});
      s.push_back(std::move(top));
      s.push_back({{0.30, 0.88}, {0.76, 0.88}});
      break;
    }
    case 3: {
      Poly upper, lower;
      arc(upper, 0.48, 0.32, 0.22, 0.20, -0.8 * M_PI, 0.5 * M_PI);
      arc(lower, 0.48, 0.68, 0.25, 0.22, -0.5 * M_PI, 0.8 * M_PI);
      s.push_back(std::move(upper));
      s.push_back(std::move(lower));
      break;
    }
    case 4:
      if (variant) {
        s.push_back({{0.30, 0.14}, {0.28, 0.52}, {0.76, 0.50}});  // open top
        s.push_back({{0.62, 0.14}, {0.62, 0.90}});
      } else {
        s.push_back({{0.62, 0.12}, {0.24, 0.62}, {0.80, 0.62}});
        s.push_back({{0.64, 0.34}, {0.64, 0.90}});
      }
      break;
    case 5: {
      s.push_back({{0.72, 0.13}, {0.34, 0.13}, {0.32, 0.46}});
      Poly bowl;
      arc(bowl, 0.50, 0.65, 0.24, 0.23, -0.65 * M_PI, 0.75 * M_PI);
      s.push_back(std::move(bowl));
      break;
    }
    case 6: {
      Poly hook;
      arc(hook, 0.56, 0.44, 0.26, 0.32, -0.45 * M_PI, -M_PI);
      s.push_back(std::move(hook));
      s.push_back(ellipse(0.48, 0.66, 0.20, 0.20));
      break;
    }
    case 7:
      s.push_back({{0.26, 0.14}, {0.76, 0.14}, {0.42, 0.88}});
      if (variant) s.push_back({{0.36, 0.50}, {0.64, 0.50}});  // crossbar
      break;
    case 8:
      s.push_back(ellipse(0.5, 0.32, 0.18, 0.17));
      s.push_back(ellipse(0.5, 0.68, 0.22, 0.20));
      break;
    case 9: {
      s.push_back(ellipse(0.52, 0.34, 0.20, 0.19));
      if (variant) {
        Poly tail;
        arc(tail, 0.52, 0.60, 0.20, 0.28, -0.15 * M_PI, 0.4 * M_PI);
        s.push_back(std::move(tail));
      } else {
        s.push_back({{0.72, 0.36}, {0.66, 0.88}});
      }
      break;
    }
  }
  return s;
}

struct Affine {
  double m00 = 1, m01 = 0, m10 = 0, m11 = 1, tx = 0, ty = 0;

  Pt apply(Pt p) const {
    return {m00 * p.x + m01 * p.y + tx, m10 * p.x + m11 * p.y + ty};
  }
};

/// Rotation, anisotropic scale, shear and translation about the image
/// center, mapping unit coordinates to pixel coordinates.
Affine random_placement(Rng& rng, double jitter = 1.0) {
  const double theta = rng.uniform(-0.20, 0.20) * jitter;
  const double sx = 1.0 + rng.uniform(-0.15, 0.15) * jitter;
  const double sy = 1.0 + rng.uniform(-0.15, 0.15) * jitter;
  const double shear = rng.uniform(-0.18, 0.18) * jitter;
  const double tx = rng.uniform(-1.5, 1.5) * jitter;
  const double ty = rng.uniform(-1.5, 1.5) * jitter;
  const double ct = std::cos(theta), st = std::sin(theta);
  Affine a;
  // scale+shear then rotate, in pixel units, centered
  const double s00 = sx, s01 = shear * sy, s10 = 0, s11 = sy;
  a.m00 = (ct * s00 - st * s10) * kSide;
  a.m01 = (ct * s01 - st * s11) * kSide;
  a.m10 = (st * s00 + ct * s10) * kSide;
  a.m11 = (st * s01 + ct * s11) * kSide;
  const Pt c = {0.5, 0.5};
  const double cx = a.m00 * c.x + a.m01 * c.y;
  const double cy = a.m10 * c.x + a.m11 * c.y;
  a.tx = kSide / 2.0 - cx + tx;
  a.ty = kSide / 2.0 - cy + ty;
  return a;
}

void render_strokes(std::vector<double>& img, const std::vector<Poly>& strokes,
                    const Affine& place, double width, double ink) {
  const double w2 = 2.0 * width * width;
  const double reach = 3.0 * width;
  for (const Poly& poly : strokes) {
    Poly px(poly.size());
    for (std::size_t i = 0; i < poly.size(); ++i) px[i] = place.apply(poly[i]);
    for (std::size_t i = 0; i + 1 < px.size(); ++i) {
      const Pt a = px[i], b = px[i + 1];
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - reach)));
      const int x1 = std::min(kSide - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + reach)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - reach)));
      const int y1 = std::min(kSide - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + reach)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double d2 = seg_dist2(x + 0.5, y + 0.5, a, b);
          const double v = ink * std::exp(-d2 / w2);
          double& cell = img[y * kSide + x];
          cell = std::max(cell, v);
        }
    }
  }
}

void blur3(std::vector<double>& img) {
  std::vector<double> out(img.size(), 0.0);
  static const double k[3] = {0.25, 0.5, 0.25};
  std::vector<double> tmp(img.size(), 0.0);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      double acc = 0;
      for (int d = -1; d <= 1; ++d) {
        const int xx = std::clamp(x + d, 0, kSide - 1);
        acc += k[d + 1] * img[y * kSide + xx];
      }
      tmp[y * kSide + x] = acc;
    }
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      double acc = 0;
      for (int d = -1; d <= 1; ++d) {
        const int yy = std::clamp(y + d, 0, kSide - 1);
        acc += k[d + 1] * tmp[yy * kSide + x];
      }
      out[y * kSide + x] = acc;
    }
  img.swap(out);
}

void commit(SynthImages& out, const std::vector<double>& img, int label,
            Rng& rng, double noise_sigma) {
  for (double v : img) {
    double u = v + noise_sigma * rng.normal();
    u = std::clamp(u, 0.0, 1.0);
    out.pixels.push_back(static_cast<std::uint8_t>(std::lround(255.0 * u)));
  }
  out.labels.push_back(static_cast<std::uint8_t>(label));
}

// ---------------------------------------------------------------------------
// Garments
// ---------------------------------------------------------------------------

enum class Garment { tshirt, trouser, pullover, dress, bag, shoe };

bool garment_inside(Garment g, double x, double y) {
  auto in_rect = [&](double x0, double x1, double y0, double y1) {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  };
  switch (g) {
    case Garment::tshirt:
      return in_rect(0.30, 0.70, 0.22, 0.84) ||
             in_rect(0.12, 0.30, 0.22, 0.44) || in_rect(0.70, 0.88, 0.22, 0.44);
    case Garment::pullover:
      return in_rect(0.30, 0.70, 0.20, 0.84) ||
             in_rect(0.12, 0.30, 0.20, 0.72) || in_rect(0.70, 0.88, 0.20, 0.72);
    case Garment::trouser:
      return in_rect(0.32, 0.68, 0.14, 0.32) ||
             in_rect(0.32, 0.47, 0.32, 0.90) || in_rect(0.53, 0.68, 0.32, 0.90);
    case Garment::dress: {
      if (y < 0.18 || y > 0.90) return false;
      const double half = 0.10 + 0.18 * (y - 0.18) / 0.72;
      return std::abs(x - 0.5) <= half;
    }
    case Garment::bag:
      return in_rect(0.24, 0.76, 0.40, 0.86);
    case Garment::shoe: {
      const double ex = (x - 0.52) / 0.33, ey = (y - 0.66) / 0.15;
      return ex * ex + ey * ey <= 1.0 || in_rect(0.16, 0.86, 0.74, 0.84);
    }
  }
  return false;
}

std::vector<Poly> garment_outline(Garment g) {
  auto rect = [](double x0, double x1, double y0, double y1) {
    return Poly{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
  };
  std::vector<Poly> s;
  switch (g) {
    case Garment::tshirt:
      s.push_back(rect(0.30, 0.70, 0.22, 0.84));
      s.push_back(rect(0.12, 0.30, 0.22, 0.44));
      s.push_back(rect(0.70, 0.88, 0.22, 0.44));
      break;
    case Garment::pullover:
      s.push_back(rect(0.30, 0.70, 0.20, 0.84));
      s.push_back(rect(0.12, 0.30, 0.20, 0.72));
      s.push_back(rect(0.70, 0.88, 0.20, 0.72));
      break;
    case Garment::trouser:
      s.push_back(rect(0.32, 0.68, 0.14, 0.32));
      s.push_back(rect(0.32, 0.47, 0.32, 0.90));
      s.push_back(rect(0.53, 0.68, 0.32, 0.90));
      break;
    case Garment::dress:
      s.push_back({{0.40, 0.18}, {0.60, 0.18}, {0.68, 0.90}, {0.32, 0.90},
                   {0.40, 0.18}});
      break;
    case Garment::bag:
      s.push_back(rect(0.24, 0.76, 0.40, 0.86));
      s.push_back(ellipse(0.5, 0.40, 0.15, 0.12));
      break;
    case Garment::shoe:
      s.push_back(ellipse(0.52, 0.66, 0.33, 0.15));
      s.push_back(rect(0.16, 0.86, 0.74, 0.84));
      break;
  }
  return s;
}

}  // namespace

SynthImages synth_digits(std::size_t n, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "synthetic_id");
  SynthImages out;
  out.count = static_cast<std::uint32_t>(n);
  out.pixels.reserve(n * kSide * kSide);
  out.labels.reserve(n);
  std::vector<double> img(kSide * kSide);
  for (std::size_t i = 0; i < n; ++i) {
    const int digit = static_cast<int>(i % 10);  // balanced classes
    std::fill(img.begin(), img.end(), 0.0);
    const Affine place = random_placement(rng);
    const double width = rng.uniform(0.7, 1.2);
    const double ink = rng.uniform(0.65, 1.0);
    const int variant = rng.uniform() < 0.5 ? 1 : 0;
    render_strokes(img, digit_strokes(digit, variant), place, width, ink);
    // occasional stroke gap: a small erased patch
    if (rng.uniform() < 0.3) {
      const int gx = 6 + static_cast<int>(rng.uniform_index(16));
      const int gy = 6 + static_cast<int>(rng.uniform_index(16));
      const int gs = 2 + static_cast<int>(rng.uniform_index(2));
      for (int y = gy; y < std::min(kSide, gy + gs); ++y)
        for (int x = gx; x < std::min(kSide, gx + gs); ++x)
          img[y * kSide + x] *= 0.15;
    }
    if (rng.uniform() < 0.35) blur3(img);
    // faint, rare background blobs: often none, occasionally one or two
    const std::uint64_t blob_pick = rng.uniform_index(4);
    const int n_blobs = blob_pick < 2 ? 0 : (blob_pick == 2 ? 1 : 2);
    for (int b = 0; b < n_blobs; ++b) {
      const double cx = rng.uniform(1, kSide - 1);
      const double cy = rng.uniform(1, kSide - 1);
      const double r = rng.uniform(1.0, 2.5);
      const double peak = rng.uniform(0.1, 0.25);
      const int x0 = std::max(0, static_cast<int>(cx - 3 * r));
      const int x1 = std::min(kSide - 1, static_cast<int>(cx + 3 * r));
      const int y0 = std::max(0, static_cast<int>(cy - 3 * r));
      const int y1 = std::min(kSide - 1, static_cast<int>(cy + 3 * r));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double d2 = (x + 0.5 - cx) * (x + 0.5 - cx) +
                            (y + 0.5 - cy) * (y + 0.5 - cy);
          double& cell = img[y * kSide + x];
          cell = std::max(cell, peak * std::exp(-d2 / (2 * r * r)));
        }
    }
    // low background glow plus pixel noise
    const double glow = rng.uniform(0.0, 0.05);
    for (double& v : img) v += glow;
    commit(out, img, digit, rng, 0.04);
  }
  return out;
}

SynthImages synth_garments(std::size_t n, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "synthetic_ood");
  SynthImages out;
  out.count = static_cast<std::uint32_t>(n);
  out.pixels.reserve(n * kSide * kSide);
  out.labels.reserve(n);
  std::vector<double> img(kSide * kSide);
  for (std::size_t i = 0; i < n; ++i) {
    const Garment g = static_cast<Garment>(i % 6);
    std::fill(img.begin(), img.end(), 0.0);
    const Affine place = random_placement(rng, 0.8);

    const bool outline_only = rng.uniform() < 0.45;
    if (outline_only) {
      const double width = rng.uniform(0.75, 1.25);
      const double ink = rng.uniform(0.7, 1.0);
      render_strokes(img, garment_outline(g), place, width, ink);
    } else {
      // Fill by inverse-mapping each pixel into canonical garment space.
      const double det = place.m00 * place.m11 - place.m01 * place.m10;
      const double i00 = place.m11 / det, i01 = -place.m01 / det;
      const double i10 = -place.m10 / det, i11 = place.m00 / det;
      const double base = rng.uniform(0.30, 0.70);
      for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) {
          const double px = x + 0.5 - place.tx, py = y + 0.5 - place.ty;
          const double ux = i00 * px + i01 * py;
          const double uy = i10 * px + i11 * py;
          if (garment_inside(g, ux, uy))
            img[y * kSide + x] = std::clamp(
                base + 0.10 * rng.normal(), 0.08, 1.0);
        }
      blur3(img);
      // bright seams and straps over the fill
      const int n_seams = 1 + static_cast<int>(rng.uniform_index(3));
      std::vector<Poly> seams;
      for (int sidx = 0; sidx < n_seams; ++sidx) {
        const double x0 = rng.uniform(0.25, 0.75), y0 = rng.uniform(0.2, 0.8);
        seams.push_back({{x0, y0},
                         {std::clamp(x0 + rng.uniform(-0.35, 0.35), 0.05, 0.95),
                          std::clamp(y0 + rng.uniform(-0.35, 0.35), 0.05, 0.95)}});
      }
      render_strokes(img, seams, place, rng.uniform(0.7, 1.0),
                     rng.uniform(0.85, 1.0));
    }
    commit(out, img, static_cast<int>(g), rng, 0.02);
  }
  return out;
}

void write_synth_idx(const SynthImages& imgs, const std::string& images_path,
                     const std::string& labels_path) {
  write_idx_images(images_path, imgs.count, imgs.rows, imgs.cols, imgs.pixels);
  write_idx_labels(labels_path, imgs.labels);
}

}  // namespace pnn
