#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace sdm {

// One presence record: where a species was observed. species_id indexes
// into [0, S).
struct OccurrenceRecord {
    double lon = 0.0;
    double lat = 0.0;
    int species_id = 0;
};

// Rectangular raster of environmental features with geographic bounds.
// Cell (ix, iy) covers lon in (lon_min + ix*cw, lon_min + (ix+1)*cw] and
// the analogous lat band; points on a shared cell edge resolve to the
// lower-index cell. values is cell-major: cell = iy*width + ix, then F
// feature entries per cell.
struct EnvGrid {
    int width = 0;
    int height = 0;
    int feature_dim = 0;
    double lon_min = 0.0, lon_max = 0.0;
    double lat_min = 0.0, lat_max = 0.0;
    std::vector<double> values;

    int cell_count() const { return width * height; }

    bool contains(double lon, double lat) const {
        return lon >= lon_min && lon <= lon_max && lat >= lat_min && lat <= lat_max;
    }

    double cell_width() const { return (lon_max - lon_min) / width; }
    double cell_height() const { return (lat_max - lat_min) / height; }

    // cell index of an in-bounds point; throws ValidationError when outside
    int cell_at(double lon, double lat) const;

    std::span<const double> cell_features(int cell) const {
        return {values.data() + static_cast<size_t>(cell) * feature_dim,
                static_cast<size_t>(feature_dim)};
    }

    // center coordinates of a cell, and a jittered point strictly inside it
    std::array<double, 2> cell_center(int cell) const;

    // throws ValidationError if shape/bounds/values are inconsistent
    void validate() const;
};

// [sin, cos] pairs of lon and lat scaled by 2*pi/360.
std::array<double, 4> encode_location(double lon, double lat);

// Feature vector of the cell containing (lon, lat). Nearest-cell lookup,
// no interpolation.
std::vector<double> extract_features(const EnvGrid& grid, double lon, double lat);

// Writes a feature row for one location into out: the 4-entry location
// encoding (when enabled) followed by the cell's F environmental features.
// out must have room for feature_row_dim(grid, with_encoder) doubles.
void assemble_feature_row(const EnvGrid& grid, bool with_encoder, double lon, double lat,
                          double* out);

inline int feature_row_dim(const EnvGrid& grid, bool with_encoder) {
    return grid.feature_dim + (with_encoder ? 4 : 0);
}

// Grid file format (CSV):
//   line 1: width,height,lon_min,lon_max,lat_min,lat_max,F
//   then width*height lines, cell-major (iy outer, ix inner), each with F
//   comma-separated values. Doubles are written round-trip exact.
void save_grid_csv(const EnvGrid& grid, const std::string& path);
EnvGrid load_grid_csv(const std::string& path);

} // namespace sdm
