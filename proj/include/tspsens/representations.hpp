#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tspsens/instance.hpp"
#include "tspsens/matrix.hpp"
#include "tspsens/task.hpp"

namespace tspsens {

/// Frozen per-node embeddings for a dataset, one n x d block per instance,
/// rows in node-index order. Immutable once loaded.
///
/// On-disk layout (all integers little-endian u32):
///
///   "TSPACT01"                      8-byte magic
///   version (=1), instance_count, d, layer_name_len
///   layer_name bytes
///   per instance: id_len, id bytes, n, n*d IEEE-754 binary32 LE, row-major
///
/// Values are widened to double in memory; a write/read round trip is exact
/// for values that are representable in binary32.
class ActivationCache {
public:
    ActivationCache() = default;
    ActivationCache(std::string dataset_ref, std::string layer_name, std::size_t dim);

    const std::string& dataset_ref() const { return dataset_ref_; }
    const std::string& layer_name() const { return layer_name_; }
    std::size_t dim() const { return dim_; }
    std::size_t instance_count() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

    /// Adds a block; throws ValidationError on duplicate id, wrong width or
    /// non-finite values.
    void add(std::string id, Matrix block);

    bool contains(const std::string& id) const { return index_.contains(id); }
    /// Throws AlignmentError if missing.
    const Matrix& block(const std::string& id) const;

    void set_dataset_ref(std::string ref) { dataset_ref_ = std::move(ref); }

    friend bool operator==(const ActivationCache& a, const ActivationCache& b) {
        return a.layer_name_ == b.layer_name_ && a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.blocks_ == b.blocks_;
    }

private:
    std::string dataset_ref_;
    std::string layer_name_;
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<Matrix> blocks_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr char kCacheMagic[8] = {'T', 'S', 'P', 'A', 'C', 'T', '0', '1'};
inline constexpr std::uint32_t kCacheVersion = 1;

/// Encodes to the binary layout above.
std::string encode_activation_cache(const ActivationCache& cache);
/// Decodes and validates; throws FormatError on bad magic, version,
/// truncation, trailing bytes or non-finite values. Never returns a partial cache.
ActivationCache decode_activation_cache(std::string_view bytes);

/// Writes the binary file plus a sidecar "<path>.manifest" text file with
/// dataset_ref, layer_name, d, instance_count and checksum lines.
void write_activation_cache(const ActivationCache& cache, const std::filesystem::path& path);
/// Reads the binary file; dataset_ref is taken from the sidecar when present.
ActivationCache read_activation_cache(const std::filesystem::path& path);

std::filesystem::path cache_manifest_path(const std::filesystem::path& path);

/// Throws AlignmentError naming the first instance that is missing from the
/// cache or whose block row count differs from its n.
void validate_cache_alignment(const ActivationCache& cache, std::span<const Instance> dataset);

/// I.i.d. standard-normal stand-in embeddings (layer "control.random").
ActivationCache synth_random_embeddings(std::span<const Instance> dataset, std::size_t dim, std::uint64_t seed);

inline constexpr const char* kRandomControlLayer = "control.random";

/// Candidate feature rows. removal: h_i per node (d columns). forbid: one
/// row per tour edge (u, v) = (tour[t], tour[t+1]) as [h_u, h_v, |h_u - h_v|]
/// (3d columns).
Matrix build_candidate_features(const Matrix& embeddings, Task task, std::span<const int> base_tour = {});
Matrix build_candidate_features(const ActivationCache& cache, const Instance& inst, Task task,
                                std::span<const int> base_tour = {});

}  // namespace tspsens
