#pragma once

#include "unmix/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace unmix {

// Locale-independent numeric formatting. format_double emits the shortest
// decimal string that round-trips the exact double, which keeps golden files
// bit-stable across platforms.
std::string format_double(double value);
double parse_double(std::string_view text, const std::string& context);

// Headerless CSV, L rows by R comma-separated columns, dot decimal separator.
EndmemberMatrix load_endmembers(const std::filesystem::path& path);
void save_endmembers(const EndmemberMatrix& m, const std::filesystem::path& path);

// Image cubes: a "key: value" text header (samples, bands, data_type,
// byte_order, interleave) next to a raw band-sequential little-endian
// float32 payload. The raw file sits at the header path with its extension
// replaced by ".raw".
std::filesystem::path raw_path_for(const std::filesystem::path& header_path);
SceneImage load_image(const std::filesystem::path& header_path);
void save_image(const SceneImage& image, const std::filesystem::path& header_path);

// Keeps bands 0, factor, 2*factor, ...
EndmemberMatrix decimate_bands(const EndmemberMatrix& m, int factor);
SceneImage decimate_bands(const SceneImage& image, int factor);

// Binary PGM (P5, maxval 255): linear=255, nonlinear=0, unclassified=128,
// row-major. width*height must equal the map length.
void save_detection_map(const DetectionMap& map, int width, int height,
                        const std::filesystem::path& path);

// Ground-truth CSV: pixel_index,label,eta_d,alpha_1..alpha_R with header row.
void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace unmix
