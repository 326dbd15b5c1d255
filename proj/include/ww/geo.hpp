// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_GEO_HPP
#define WW_GEO_HPP

#include <filesystem>

namespace ww::geo {

/// WGS84 position in decimal degrees.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const GeoPoint&) const = default;
};

bool coordinates_valid(const GeoPoint& p);

/// Mean spherical earth radius, meters.
inline constexpr double kEarthRadiusM = 6371000.0;

/// Great-circle distance in meters between two WGS84 points (haversine,
/// spherical earth).
double haversine_m(const GeoPoint& a, const GeoPoint& b);

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const PixelPoint&) const = default;
};

/// Affine pixel->geo bridge in the raster world-file convention:
///   lon = a*px + b*py + c
///   lat = d*px + e*py + f
/// Construction rejects singular coefficient matrices.
class PixelToGeoTransform {
 public:
  PixelToGeoTransform(double a, double b, double c, double d, double e,
                      double f);

  GeoPoint pixel_to_geo(const PixelPoint& p) const;
  PixelPoint geo_to_pixel(const GeoPoint& g) const;

  double a() const { return a_; }
  double b() const { return b_; }
  double c() const { return c_; }
  double d() const { return d_; }
  double e() const { return e_; }
  double f() const { return f_; }

 private:
  double a_, b_, c_, d_, e_, f_;
  double det_;
};

/// Reads a 6-line raster world file (line order: a, d, b, e, c, f).
PixelToGeoTransform load_world_file(const std::filesystem::path& path);

void save_world_file(const std::filesystem::path& path,
                     const PixelToGeoTransform& t);

}  // namespace ww::geo

#endif  // WW_GEO_HPP
