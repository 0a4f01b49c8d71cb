#pragma once

#include <filesystem>

#include "proulearn/matrix.hpp"

namespace proulearn {

enum class FileFormat { binary, csv };

// Feature files. Binary layout (little-endian): magic "PULF", u32 version,
// u64 rows, u64 cols, then rows*cols f32 row-major. CSV is one sample per
// line, optional single header line when csv_header is set.
FeatureMatrix load_features(const std::filesystem::path& path, FileFormat format,
                            bool csv_header = false);
void save_features(const FeatureMatrix& m, const std::filesystem::path& path,
                   FileFormat format, bool csv_header = false);

// Label files, binary only: magic "PULL", u32 version, u64 count,
// u32 num_classes, then count u32 labels.
LabelVector load_labels(const std::filesystem::path& path);
void save_labels(const LabelVector& v, const std::filesystem::path& path);

}  // namespace proulearn
