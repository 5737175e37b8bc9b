#include "sdm/geo.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sdm/errors.hpp"

namespace sdm {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Maps a coordinate to a cell index along one axis. Cells are
// lower-exclusive/upper-inclusive except the first, which also owns its
// lower boundary, so interior edges resolve to the lower-index cell.
int axis_cell(double value, double lo, double cell_size, int count) {
    const double t = (value - lo) / cell_size;
    if (t <= 0.0) return 0;
    int idx = static_cast<int>(std::ceil(t)) - 1;
    if (idx >= count) idx = count - 1;
    return idx;
}

} // namespace

int EnvGrid::cell_at(double lon, double lat) const {
    if (!contains(lon, lat)) {
        std::ostringstream msg;
        msg << "point (" << lon << ", " << lat << ") outside grid bounds [" << lon_min << ", "
            << lon_max << "] x [" << lat_min << ", " << lat_max << "]";
        throw ValidationError(msg.str());
    }
    const int ix = axis_cell(lon, lon_min, cell_width(), width);
    const int iy = axis_cell(lat, lat_min, cell_height(), height);
    return iy * width + ix;
}

std::array<double, 2> EnvGrid::cell_center(int cell) const {
    const int iy = cell / width;
    const int ix = cell % width;
    return {lon_min + (ix + 0.5) * cell_width(), lat_min + (iy + 0.5) * cell_height()};
}

void EnvGrid::validate() const {
    if (width < 1 || height < 1) throw ValidationError("grid dimensions must be >= 1");
    if (feature_dim < 1) throw ValidationError("grid feature count must be >= 1");
    if (!(lon_min < lon_max) || !(lat_min < lat_max)) {
        throw ValidationError("grid bounds must satisfy lon_min < lon_max and lat_min < lat_max");
    }
    const size_t expected = static_cast<size_t>(width) * height * feature_dim;
    if (values.size() != expected) {
        throw ValidationError("grid value count does not match width*height*F");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw ValidationError("grid contains a non-finite value");
    }
}

std::array<double, 4> encode_location(double lon, double lat) {
    const double a = kTwoPi * lon / 360.0;
    const double b = kTwoPi * lat / 360.0;
    return {std::sin(a), std::cos(a), std::sin(b), std::cos(b)};
}

std::vector<double> extract_features(const EnvGrid& grid, double lon, double lat) {
    const auto feats = grid.cell_features(grid.cell_at(lon, lat));
    return {feats.begin(), feats.end()};
}

void assemble_feature_row(const EnvGrid& grid, bool with_encoder, double lon, double lat,
                          double* out) {
    if (with_encoder) {
        const auto enc = encode_location(lon, lat);
        out[0] = enc[0];
        out[1] = enc[1];
        out[2] = enc[2];
        out[3] = enc[3];
        out += 4;
    }
    const auto feats = grid.cell_features(grid.cell_at(lon, lat));
    for (int f = 0; f < grid.feature_dim; ++f) out[f] = feats[f];
}

void save_grid_csv(const EnvGrid& grid, const std::string& path) {
    grid.validate();
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open grid file for writing: " + path);
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%d\n", grid.width, grid.height,
                  grid.lon_min, grid.lon_max, grid.lat_min, grid.lat_max, grid.feature_dim);
    out << buf;
    for (int cell = 0; cell < grid.cell_count(); ++cell) {
        const auto feats = grid.cell_features(cell);
        for (int f = 0; f < grid.feature_dim; ++f) {
            std::snprintf(buf, sizeof(buf), f + 1 == grid.feature_dim ? "%.17g\n" : "%.17g,",
                          feats[f]);
            out << buf;
        }
    }
    if (!out) throw ValidationError("failed writing grid file: " + path);
}

EnvGrid load_grid_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open grid file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("grid file is empty: " + path);

    EnvGrid grid;
    {
        std::istringstream hs(line);
        char comma;
        if (!(hs >> grid.width >> comma >> grid.height >> comma >> grid.lon_min >> comma >>
              grid.lon_max >> comma >> grid.lat_min >> comma >> grid.lat_max >> comma >>
              grid.feature_dim)) {
            throw ValidationError("malformed grid header in " + path);
        }
    }
    if (grid.width < 1 || grid.height < 1 || grid.feature_dim < 1) {
        throw ValidationError("grid header has non-positive dimensions in " + path);
    }
    grid.values.reserve(static_cast<size_t>(grid.width) * grid.height * grid.feature_dim);
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        while (std::getline(ls, tok, ',')) {
            try {
                size_t pos = 0;
                const double v = std::stod(tok, &pos);
                if (pos != tok.size()) throw std::invalid_argument(tok);
                grid.values.push_back(v);
            } catch (const std::exception&) {
                throw ValidationError("malformed grid value at line " + std::to_string(line_no) +
                                      " in " + path);
            }
        }
    }
    grid.validate();
    return grid;
}

} // namespace sdm
