#include "kgcot/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "kgcot/error.hpp"
#include "kgcot/tensor.hpp"

namespace kgcot {

ImageFeatures load_image_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("image features: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    ImageFeatures img;
    img.source_tag = j.at("source_tag").get<std::string>();
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 2) throw ParseError("image features: shape must be [rows, cols] in " + path);
    if (j.contains("data")) {
        auto data = j.at("data").get<std::vector<double>>();
        img.patches = Tensor::from_data({shape[0], shape[1]}, std::move(data));
    } else {
        if (img.source_tag != "zero") {
            throw ParseError("image features: missing data for tag '" + img.source_tag + "' in " + path);
        }
        img.patches = Tensor::zeros({shape[0], shape[1]});
    }
    img.validate();
    return img;
}

std::vector<Sample> load_dataset(const std::string& path, const std::string& features_dir) {
    std::ifstream in(path);
    if (!in) throw ParseError("dataset: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (!j.is_array()) throw ParseError("dataset: expected a JSON array in " + path);

    std::vector<Sample> samples;
    std::set<std::string> seen;
    for (const auto& rec : j) {
        Sample s;
        s.id = rec.at("id").get<std::string>();
        if (!seen.insert(s.id).second) throw ParseError("dataset: duplicate sample id '" + s.id + "'");
        s.split = rec.value("split", "train");
        s.question = rec.at("question").get<std::string>();
        s.context = rec.value("context", "");
        s.choices = rec.at("choices").get<std::vector<std::string>>();
        s.answer_index = rec.at("answer").get<int>();
        s.rationale = rec.value("rationale", "");
        if (rec.contains("caption")) s.caption = rec.at("caption").get<std::string>();
        s.topic = rec.value("topic", "");
        s.subject = rec.value("subject", "");
        s.context_type = rec.value("context_type", "");
        s.grade_band = rec.value("grade_band", "");
        if (rec.contains("image")) {
            s.image_ref = rec.at("image").get<std::string>();
            const std::string feature_path = features_dir + "/" + s.image_ref + ".json";
            try {
                s.image = load_image_features(feature_path);
            } catch (const ParseError& e) {
                throw ParseError("dataset: sample '" + s.id + "': " + e.what());
            }
        }
        s.validate();
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<Sample> split_of(const std::vector<Sample>& samples, const std::string& split) {
    std::vector<Sample> out;
    for (const auto& s : samples)
        if (s.split == split) out.push_back(s);
    return out;
}

Vocabulary build_vocabulary(const std::vector<Sample>& samples) {
    Vocabulary v;
    v.add_all({"question", ":", "context", "options", "rationale", "the", "answer", "is", "(", ")"});
    for (int i = 0; i < 10; ++i) v.add(choice_letter(i));
    for (const auto& s : samples) {
        v.add_all(tokenize(s.question));
        v.add_all(tokenize(s.context));
        if (s.caption) v.add_all(tokenize(*s.caption));
        for (const auto& c : s.choices) v.add_all(tokenize(c));
        v.add_all(tokenize(s.rationale));
    }
    return v;
}

std::vector<Sample> stratified_fraction(const std::vector<Sample>& train, double fraction) {
    if (fraction <= 0.0 || fraction > 1.0) {
        throw ConfigError("train_fraction must be in (0, 1], got " + std::to_string(fraction));
    }
    if (fraction == 1.0) return train;
    std::map<std::string, std::vector<const Sample*>> by_topic;
    for (const auto& s : train) by_topic[s.topic].push_back(&s);

    std::set<std::string> chosen;
    for (auto& [topic, members] : by_topic) {
        std::sort(members.begin(), members.end(), [](const Sample* a, const Sample* b) {
            const auto ha = fnv1a(a->id), hb = fnv1a(b->id);
            if (ha != hb) return ha < hb;
            return a->id < b->id;
        });
        const auto keep = static_cast<size_t>(
            std::llround(fraction * static_cast<double>(members.size())));
        for (size_t i = 0; i < keep && i < members.size(); ++i) chosen.insert(members[i]->id);
    }
    std::vector<Sample> out;
    for (const auto& s : train)
        if (chosen.count(s.id)) out.push_back(s);
    return out;
}

}  // namespace kgcot
