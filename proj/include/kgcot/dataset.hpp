#pragma once

#include <string>
#include <vector>

#include "kgcot/modality.hpp"
#include "kgcot/text.hpp"

namespace kgcot {

// JSON array of sample records; image references are resolved against
// features_dir (empty ref loads nothing). Ids must be unique.
std::vector<Sample> load_dataset(const std::string& path, const std::string& features_dir);

// {"source_tag": ..., "shape": [m, d], "data": [...]}; data may be omitted
// for the zero tag.
ImageFeatures load_image_features(const std::string& path);

std::vector<Sample> split_of(const std::vector<Sample>& samples, const std::string& split);

// Section markers, choice letters, then first-seen sample tokens. Callers
// pass the training split; ids are dense and stable for a fixed dataset.
Vocabulary build_vocabulary(const std::vector<Sample>& samples);

// Deterministic stratified subset: within each topic, order by hashed id and
// keep the nearest share. Fractions nest (every 20% sample is in the 40% set).
std::vector<Sample> stratified_fraction(const std::vector<Sample>& train, double fraction);

}  // namespace kgcot
