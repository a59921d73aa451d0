// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "splatlift/datagen.hpp"
#include "splatlift/geometry.hpp"
#include "splatlift/image.hpp"
#include "splatlift/lifter.hpp"
#include "splatlift/splat_render.hpp"

namespace splatlift {

inline constexpr const char* kToolVersion = "0.1.0";

// ---- float image container (.fimg) ---------------------------------------
// magic "FIMG", u16 version, u32 height, u32 width, u32 channels,
// u8 semantics, then H*W*C little-endian f32, row-major.
void write_float_image(const std::filesystem::path& path, const FloatImage& img);
FloatImage read_float_image(const std::filesystem::path& path);

// ---- 8-bit PNG preview (write-only; computation reads .fimg) -------------
void write_png(const std::filesystem::path& path, const FloatImage& img);

// ---- gaussian scene container (.gsc) --------------------------------------
// magic "GSCN", u16 version, u32 count, u8 sh_degree, then per gaussian
// mu[3], opacity, quat[4], scales[3], color[3 or 12] as f32 LE.
void write_scene(const std::filesystem::path& path, const GaussianScene& scene);
GaussianScene read_scene(const std::filesystem::path& path);

// Community splat PLY with x, y, z, f_dc_0..2, opacity, scale_0..2,
// rot_0..3 (binary little endian). Opacity is stored as logit, scales as
// log; read_ply inverts both and the f_dc color transform.
void write_ply(const std::filesystem::path& path, const GaussianScene& scene);
GaussianScene read_ply(const std::filesystem::path& path);

// ---- lifter checkpoint (.ckpt) --------------------------------------------
// magic "LCKP", versioned; config, every layer's weights and Adam moments
// as f64 so a reloaded run continues bit-identically.
void write_checkpoint(const std::filesystem::path& path, const LifterParams& params);
LifterParams read_checkpoint(const std::filesystem::path& path);

// ---- dataset directory -----------------------------------------------------
struct DatasetView {
    std::string image; // paths relative to the dataset root
    std::string png;
    std::string depth;
    Camera camera;
};

struct Dataset {
    std::filesystem::path root;
    std::string scene_id;
    std::string kind;
    uint64_t seed = 0;
    std::vector<DatasetView> views;
    std::map<std::pair<int, int>, std::string> mask_paths; // (input, target)

    FloatImage load_image(int view) const;
    FloatImage load_depth(int view) const;
    FloatImage load_mask(int input, int target) const;
    bool has_mask(int input, int target) const;
};

// Writes images (fimg + png preview), exact depths, oracle masks for every
// ordered pair, and manifest.json. Returns the loaded manifest.
Dataset write_synth_dataset(const std::filesystem::path& dir, const QuadScene& scene,
                            const std::vector<Camera>& cameras);

// Validates that every referenced file exists and the version is known.
Dataset load_dataset(const std::filesystem::path& dir);

// ---- reproducibility stamp -------------------------------------------------
// FNV-1a over canonical "key=value" lines; any flag that changes the
// computation must be included by the caller.
uint64_t config_hash(const std::vector<std::pair<std::string, std::string>>& entries);

void write_stamp(const std::filesystem::path& path, const std::string& command, uint64_t seed,
                 uint64_t config_hash_value);

void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace splatlift
