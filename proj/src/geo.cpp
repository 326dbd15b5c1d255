// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/geo.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ww/error.hpp"

namespace ww::geo {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;

double hav(double angle_rad) {
  double s = std::sin(0.5 * angle_rad);
  return s * s;
}
}  // namespace

bool coordinates_valid(const GeoPoint& p) {
  return p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
  const double lat_a = a.lat * kDegToRad;
  const double lat_b = b.lat * kDegToRad;
  const double h = hav(lat_a - lat_b) +
                   std::cos(lat_a) * std::cos(lat_b) *
                       hav((a.lon - b.lon) * kDegToRad);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

PixelToGeoTransform::PixelToGeoTransform(double a, double b, double c,
                                         double d, double e, double f)
    : a_(a), b_(b), c_(c), d_(d), e_(e), f_(f), det_(a * e - b * d) {
  if (det_ == 0.0 || !std::isfinite(det_)) {
    throw Error(ErrorKind::Domain, "pixel-to-geo transform is not invertible");
  }
}

GeoPoint PixelToGeoTransform::pixel_to_geo(const PixelPoint& p) const {
  return GeoPoint{d_ * p.x + e_ * p.y + f_, a_ * p.x + b_ * p.y + c_};
}

PixelPoint PixelToGeoTransform::geo_to_pixel(const GeoPoint& g) const {
  const double u = g.lon - c_;
  const double v = g.lat - f_;
  return PixelPoint{(e_ * u - b_ * v) / det_, (a_ * v - d_ * u) / det_};
}

PixelToGeoTransform load_world_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  double line[6];
  for (int i = 0; i < 6; ++i) {
    std::string text;
    if (!std::getline(in, text)) {
      throw Error(ErrorKind::Format,
                  "world file " + path.string() + " has fewer than 6 lines");
    }
    std::istringstream row(text);
    if (!(row >> line[i])) {
      throw Error(ErrorKind::Format, "world file line " + std::to_string(i + 1) +
                                         " is not a number: " + text);
    }
  }
  // World-file line order is a, d, b, e, c, f.
  return PixelToGeoTransform(line[0], line[2], line[4], line[1], line[3],
                             line[5]);
}

void save_world_file(const std::filesystem::path& path,
                     const PixelToGeoTransform& t) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  out << t.a() << "\n" << t.d() << "\n" << t.b() << "\n" << t.e() << "\n"
      << t.c() << "\n" << t.f() << "\n";
}

}  // namespace ww::geo
