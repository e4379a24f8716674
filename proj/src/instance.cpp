#include "tspsens/instance.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "tspsens/error.hpp"
#include "tspsens/io.hpp"
#include "tspsens/rng.hpp"

namespace tspsens {

using nlohmann::json;

namespace {

bool in_unit_interval(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

Instance::Instance(std::string id, std::vector<Point> coords, std::optional<std::uint64_t> seed)
    : id_(std::move(id)), coords_(std::move(coords)), seed_(seed) {
    if (coords_.size() < kMinNodes) {
        throw ValidationError("instance '" + id_ + "' has n=" + std::to_string(coords_.size()) +
                              "; need n >= " + std::to_string(kMinNodes));
    }
    for (std::size_t i = 0; i < coords_.size(); ++i) {
        if (!in_unit_interval(coords_[i].x) || !in_unit_interval(coords_[i].y)) {
            throw ValidationError("instance '" + id_ + "': coordinate at index " + std::to_string(i) +
                                  " lies outside [0,1]^2");
        }
    }
}

std::string generated_id(std::size_t n, std::uint64_t seed) {
    return "n" + std::to_string(n) + "-s" + std::to_string(seed);
}

Instance generate_instance(std::size_t n, std::uint64_t seed) {
    if (n < kMinNodes) {
        throw ValidationError("invalid size n=" + std::to_string(n) + "; need n >= " + std::to_string(kMinNodes));
    }
    Rng rng(seed);
    std::vector<Point> coords(n);
    for (auto& p : coords) {
        p.x = rng.uniform();
        p.y = rng.uniform();
    }
    return Instance(generated_id(n, seed), std::move(coords), seed);
}

Instance make_instance(std::vector<Point> coords, std::string id) {
    return Instance(std::move(id), std::move(coords), std::nullopt);
}

double scale_coordinate(double raw, const MetricOptions& opts) {
    const double scaled = raw * opts.scale;
    if (!opts.round) return scaled;
    // nearbyint honours the default FE_TONEAREST mode: ties go to even.
    return std::nearbyint(scaled * 1e4) / 1e4;
}

DistanceMatrix::DistanceMatrix(const Instance& inst, const MetricOptions& opts)
    : n_(inst.size()), scaled_(inst.size()), d_(inst.size() * inst.size(), 0.0) {
    for (std::size_t i = 0; i < n_; ++i) {
        scaled_[i] = {scale_coordinate(inst[i].x, opts), scale_coordinate(inst[i].y, opts)};
    }
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = i + 1; j < n_; ++j) {
            const double dist = std::hypot(scaled_[i].x - scaled_[j].x, scaled_[i].y - scaled_[j].y);
            d_[i * n_ + j] = dist;
            d_[j * n_ + i] = dist;
        }
    }
}

double DistanceMatrix::at(std::size_t i, std::size_t j) const {
    if (i >= n_ || j >= n_) {
        throw IndexError("node index out of range: (" + std::to_string(i) + ", " + std::to_string(j) +
                         ") with n=" + std::to_string(n_));
    }
    return (*this)(i, j);
}

double scaled_distance(const Instance& inst, std::size_t i, std::size_t j) {
    if (i >= inst.size() || j >= inst.size()) {
        throw IndexError("node index out of range: (" + std::to_string(i) + ", " + std::to_string(j) +
                         ") with n=" + std::to_string(inst.size()));
    }
    const MetricOptions opts;
    const double dx = scale_coordinate(inst[i].x, opts) - scale_coordinate(inst[j].x, opts);
    const double dy = scale_coordinate(inst[i].y, opts) - scale_coordinate(inst[j].y, opts);
    return std::hypot(dx, dy);
}

std::string instance_to_json_line(const Instance& inst) {
    json coords = json::array();
    for (const auto& p : inst.coords()) coords.push_back({p.x, p.y});
    json j = {{"id", inst.id()}, {"n", inst.size()}, {"coords", std::move(coords)}};
    if (inst.seed()) j["seed"] = *inst.seed();
    return j.dump();
}

Instance instance_from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
        const auto n = j.at("n").get<std::size_t>();
        std::vector<Point> coords;
        for (const auto& c : j.at("coords")) {
            if (c.size() != 2) throw FormatError("coordinate must be an [x, y] pair");
            coords.push_back({c[0].get<double>(), c[1].get<double>()});
        }
        const auto id = j.at("id").get<std::string>();
        if (coords.size() != n) {
            throw FormatError("instance '" + id + "': n=" + std::to_string(n) + " but " +
                              std::to_string(coords.size()) + " coordinates");
        }
        std::optional<std::uint64_t> seed;
        if (j.contains("seed") && !j["seed"].is_null()) seed = j["seed"].get<std::uint64_t>();
        return Instance(id, std::move(coords), seed);
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed instance record: ") + e.what());
    }
}

std::vector<Instance> read_instances(const std::filesystem::path& path) {
    std::vector<Instance> out;
    std::unordered_set<std::string> seen;
    for (const auto& line : io::read_lines(path)) {
        auto inst = instance_from_json_line(line);
        if (!seen.insert(inst.id()).second) throw ValidationError("duplicate instance id '" + inst.id() + "'");
        out.push_back(std::move(inst));
    }
    return out;
}

void write_instances(const std::filesystem::path& path, std::span<const Instance> dataset) {
    std::string buf;
    for (const auto& inst : dataset) {
        buf += instance_to_json_line(inst);
        buf += '\n';
    }
    io::write_file(path, buf);
}

}  // namespace tspsens
