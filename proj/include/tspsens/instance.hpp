#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tspsens {

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

/// Smallest n at which both node removal and edge forbidding are non-degenerate.
inline constexpr std::size_t kMinNodes = 4;

/// A set of n >= 4 points in the unit square. Immutable after construction.
class Instance {
public:
    Instance(std::string id, std::vector<Point> coords, std::optional<std::uint64_t> seed);

    const std::string& id() const { return id_; }
    std::size_t size() const { return coords_.size(); }
    std::span<const Point> coords() const { return coords_; }
    const Point& operator[](std::size_t i) const { return coords_[i]; }
    const std::optional<std::uint64_t>& seed() const { return seed_; }

    friend bool operator==(const Instance&, const Instance&) = default;

private:
    std::string id_;
    std::vector<Point> coords_;
    std::optional<std::uint64_t> seed_;
};

/// i.i.d. uniform points on [0,1)^2 from xoshiro256** seeded with `seed`
/// (x then y for each node, in node order). Throws ValidationError for n < 4.
Instance generate_instance(std::size_t n, std::uint64_t seed);

/// Default id for generated instances: "n<n>-s<seed>".
std::string generated_id(std::size_t n, std::uint64_t seed);

/// Import path. Validates every coordinate lies in [0,1] and n >= 4.
Instance make_instance(std::vector<Point> coords, std::string id);

/// Options for turning raw coordinates into the working metric.
struct MetricOptions {
    double scale = 100.0;
    /// Round scaled coordinates to 4 decimals (half-to-even).
    bool round = true;
};

/// Scale and round one raw coordinate the way the canonical metric does.
double scale_coordinate(double raw, const MetricOptions& opts = {});

/// Dense symmetric distance table on scaled, rounded coordinates.
class DistanceMatrix {
public:
    explicit DistanceMatrix(const Instance& inst, const MetricOptions& opts = {});

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    /// Bounds-checked access; throws IndexError.
    double at(std::size_t i, std::size_t j) const;
    std::span<const Point> scaled_coords() const { return scaled_; }

private:
    std::size_t n_;
    std::vector<Point> scaled_;
    std::vector<double> d_;
};

/// Euclidean distance between nodes i and j under the canonical metric.
double scaled_distance(const Instance& inst, std::size_t i, std::size_t j);

// Dataset files: one JSON object per line, {"id","n","coords":[[x,y],...],"seed"?}.

std::vector<Instance> read_instances(const std::filesystem::path& path);
void write_instances(const std::filesystem::path& path, std::span<const Instance> dataset);
std::string instance_to_json_line(const Instance& inst);
Instance instance_from_json_line(const std::string& line);

}  // namespace tspsens
