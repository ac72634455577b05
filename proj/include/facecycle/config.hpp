#pragma once

#include <string>

#include <json.hpp>

#include "facecycle/error.hpp"
#include "facecycle/metrics.hpp"
#include "facecycle/recognizer.hpp"
#include "facecycle/trainer.hpp"

namespace facecycle {

// JSON round-trips for the configuration types. Readers start from `defaults`,
// reject unknown keys and wrong types, validate, and report failures as
// ConfigError with the dotted path (under `prefix`) of the first offending key.

nlohmann::json to_json(const GeneratorConfig& c);
nlohmann::json to_json(const DiscriminatorConfig& c);
nlohmann::json to_json(const PreprocessConfig& c);
nlohmann::json to_json(const LossWeights& c);
nlohmann::json to_json(const TripletConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const RecognizerConfig& c);
nlohmann::json to_json(const FineTuneConfig& c);
nlohmann::json to_json(const QualityConfig& c);

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults = {},
                                   const std::string& prefix = "train");
RecognizerConfig recognizer_config_from_json(const nlohmann::json& j, const RecognizerConfig& defaults = {},
                                             const std::string& prefix = "recognizer");
FineTuneConfig fine_tune_config_from_json(const nlohmann::json& j,
                                          const FineTuneConfig& defaults = FineTuneConfig::first_stage(),
                                          const std::string& prefix = "finetune");
QualityConfig quality_config_from_json(const nlohmann::json& j, const QualityConfig& defaults = {},
                                       const std::string& prefix = "quality");

/// Strict reader over one JSON object section.
class FieldReader {
public:
    FieldReader(const nlohmann::json& object, std::string prefix, std::initializer_list<const char*> known);

    std::string key(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }
    bool has(const char* name) const { return object_.contains(name); }
    const nlohmann::json& raw(const char* name) const { return object_.at(name); }

    void read(const char* name, int& out) const;
    void read(const char* name, double& out) const;
    void read(const char* name, bool& out) const;
    void read(const char* name, std::string& out) const;
    void read(const char* name, std::uint64_t& out) const;

    /// Reads a string and maps it through `parse`; parse failures become ConfigError.
    template <typename E, typename Parse>
    void read_enum(const char* name, E& out, Parse parse) const {
        if (!has(name)) return;
        std::string s;
        read(name, s);
        try {
            out = parse(s);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(key(name), e.what());
        }
    }

private:
    const nlohmann::json& object_;
    std::string prefix_;
};

/// Runs `validate`, re-rooting any ConfigError key (whose first path component
/// is the struct's short name) under `prefix`.
template <typename F>
void validate_under(const std::string& prefix, F&& validate) {
    try {
        validate();
    } catch (const ConfigError& e) {
        const auto& k = e.key();
        const auto dot = k.find('.');
        const std::string tail = dot == std::string::npos ? k : k.substr(dot + 1);
        std::string what = e.what();
        const auto colon = what.find("': ");
        throw ConfigError(prefix + "." + tail, colon == std::string::npos ? what : what.substr(colon + 3));
    }
}

}  // namespace facecycle
