#pragma once

// On-disk formats: the JSONL trajectory dataset, SceneSpec batches, and PPM
// images.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ovod/core.hpp"
#include "ovod/detector_env.hpp"
#include "ovod/raster.hpp"

namespace ovod {

inline constexpr int kDatasetVersion = 1;

nlohmann::json record_to_json(const ImageRecord& r);
ImageRecord record_from_json(const nlohmann::json& j);

/// One record per line, each tagged with the format version.
std::string dataset_to_jsonl(std::span<const ImageRecord> records);
/// Blank lines are skipped; errors name the 1-based line number.
std::vector<ImageRecord> dataset_from_jsonl(std::istream& in);

void save_dataset(const std::string& path, std::span<const ImageRecord> records);
std::vector<ImageRecord> load_dataset(const std::string& path);

nlohmann::json scene_to_json(const SceneSpec& s);
SceneSpec scene_from_json(const nlohmann::json& j);
void save_scenes(const std::string& path, std::span<const SceneSpec> scenes);
std::vector<SceneSpec> load_scenes(const std::string& path);
std::vector<SceneSpec> scenes_from_jsonl(std::istream& in);

/// P6 when `binary`, otherwise P3; maxval 255.
std::string encode_ppm(const RasterImage& img, bool binary = true);
RasterImage decode_ppm(const std::string& bytes);
void save_ppm(const std::string& path, const RasterImage& img, bool binary = true);
RasterImage load_ppm(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace ovod
