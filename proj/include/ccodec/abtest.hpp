#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccodec/errors.hpp"

namespace ccodec::abtest {

using json = nlohmann::json;

// status mirrors the HTTP code the API answers with.
class AbError : public Error {
  public:
    AbError(int status, const std::string& what) : Error(what), status_(status) {}
    int status() const { return status_; }

  private:
    int status_;
};

enum class Gender { male, female };

// stimulus_a is the system under test, stimulus_b the comparison.
struct Trial {
    std::string trial_id;
    std::string stimulus_a;
    std::string stimulus_b;
    std::string condition_a;
    std::string condition_b;
    Gender gender = Gender::male;
    // When set, stimulus_b is presented in slot "A".
    bool swapped = false;
};

// Listener scores run from -2 to +2; positive prefers the sample presented as "A".
// `score` is oriented so that positive prefers the system under test.
struct Vote {
    std::string session_id;
    std::string trial_id;
    std::string listener_id;
    int score = 0;
    int raw_score = 0;
    std::string timestamp;
};

json to_json(const Vote& v);
Vote vote_from_json(const json& j);

struct Summary {
    double mean_total = 0.0;
    std::optional<double> mean_male, mean_female;
    std::int64_t n_total = 0, n_male = 0, n_female = 0;
};

json to_json(const Summary& s);
// Throws AbError(409) without votes.
Summary summarize(const std::vector<Trial>& trials, const std::vector<Vote>& votes);

int orient(int raw_score, bool swapped);
// Pure function of (seed, trial index).
bool presentation_swapped(std::uint64_t seed, std::size_t index);

// Manifest: {"seed": n, "base_dir": optional, "trials": [{"trial_id", "stimulus_a",
// "stimulus_b", "condition_a", "condition_b", "speaker_gender": "male"|"female"}]}.
// Relative stimulus paths resolve against base_dir. Throws AbError(400) on a bad
// manifest, listing every missing audio file.
std::vector<Trial> trials_from_manifest(const json& manifest, std::uint64_t* seed_out = nullptr);

std::vector<Vote> read_vote_log(const std::filesystem::path& path);

class Session {
  public:
    // Creates the session directory with session.json and an empty vote log.
    Session(std::string id, std::filesystem::path dir, std::vector<Trial> trials, std::uint64_t seed);
    // Reopens a session written earlier, replaying its vote log.
    static std::unique_ptr<Session> open(const std::filesystem::path& dir);

    const std::string& id() const { return id_; }
    std::size_t size() const { return trials_.size(); }
    std::uint64_t seed() const { return seed_; }

    // First trial this listener has not voted on, marking it as served; nullopt when done.
    std::optional<std::pair<std::size_t, Trial>> next_for(const std::string& listener);
    std::size_t completed_by(const std::string& listener) const;
    // Validates, orients and appends to the log. Throws AbError on unknown trials,
    // out-of-range scores, duplicates and votes on trials not yet served.
    Vote record_vote(const std::string& trial_id, const std::string& listener, const json& score);
    Summary summary() const;
    std::vector<Vote> votes() const;
    std::vector<Trial> trials() const { return trials_; }
    // Path of a stimulus as presented in slot "A" or "B".
    std::filesystem::path stimulus(const std::string& trial_id, char slot) const;

    std::filesystem::path log_path() const { return dir_ / "votes.ndjson"; }

  private:
    Session() = default;
    std::size_t index_of(const std::string& trial_id) const;

    std::string id_;
    std::filesystem::path dir_;
    std::vector<Trial> trials_;
    std::uint64_t seed_ = 0;
    std::string created_at_;

    mutable std::shared_mutex mu_;
    std::vector<Vote> votes_;
    std::map<std::string, std::set<std::size_t>> voted_;
    std::map<std::string, std::set<std::size_t>> served_;
};

// All sessions under one data directory.
class Store {
  public:
    // Reopens every session already present.
    explicit Store(std::filesystem::path data_dir);

    std::string create(const json& manifest);
    // Throws AbError(404) for unknown ids.
    Session& get(const std::string& id);

  private:
    std::filesystem::path dir_;
    std::shared_mutex mu_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
    std::uint64_t counter_ = 0;
};

std::string utc_timestamp();

} // namespace ccodec::abtest
