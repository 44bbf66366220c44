#include "ccodec/abtest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

namespace ccodec::abtest {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

const char* gender_name(Gender g) { return g == Gender::male ? "male" : "female"; }

Gender parse_gender(const std::string& s, const std::string& trial_id) {
    if (s == "male") return Gender::male;
    if (s == "female") return Gender::female;
    throw AbError(400, "trial '" + trial_id + "': speaker_gender must be \"male\" or \"female\", got \"" + s + "\"");
}

json trial_json(const Trial& t) {
    return {{"trial_id", t.trial_id},       {"stimulus_a", t.stimulus_a},         {"stimulus_b", t.stimulus_b},
            {"condition_a", t.condition_a}, {"condition_b", t.condition_b},       {"speaker_gender", gender_name(t.gender)},
            {"swapped", t.swapped}};
}

std::string required_string(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
        throw AbError(400, where + ": missing string field '" + key + "'");
    return j[key].get<std::string>();
}

void write_json_file(const fs::path& path, const json& j) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw AbError(500, "cannot write " + tmp.string());
        out << j.dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

} // namespace

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

json to_json(const Vote& v) {
    return {{"session_id", v.session_id}, {"trial_id", v.trial_id}, {"listener_id", v.listener_id},
            {"score", v.score},           {"raw_score", v.raw_score}, {"timestamp", v.timestamp}};
}

Vote vote_from_json(const json& j) {
    Vote v;
    v.session_id = j.at("session_id").get<std::string>();
    v.trial_id = j.at("trial_id").get<std::string>();
    v.listener_id = j.at("listener_id").get<std::string>();
    v.score = j.at("score").get<int>();
    v.raw_score = j.value("raw_score", v.score);
    v.timestamp = j.value("timestamp", "");
    return v;
}

json to_json(const Summary& s) {
    auto opt = [](const std::optional<double>& m) { return m ? json(*m) : json(nullptr); };
    return {{"mean_total", s.mean_total}, {"mean_male", opt(s.mean_male)}, {"mean_female", opt(s.mean_female)},
            {"n_total", s.n_total},       {"n_male", s.n_male},           {"n_female", s.n_female}};
}

Summary summarize(const std::vector<Trial>& trials, const std::vector<Vote>& votes) {
    if (votes.empty()) throw AbError(409, "no votes recorded yet");
    std::map<std::string, Gender> gender;
    for (const auto& t : trials) gender[t.trial_id] = t.gender;
    std::int64_t sum = 0, sum_m = 0, sum_f = 0;
    Summary s;
    for (const auto& v : votes) {
        const auto it = gender.find(v.trial_id);
        if (it == gender.end()) throw AbError(500, "vote for unknown trial '" + v.trial_id + "'");
        sum += v.score;
        ++s.n_total;
        if (it->second == Gender::male) {
            sum_m += v.score;
            ++s.n_male;
        } else {
            sum_f += v.score;
            ++s.n_female;
        }
    }
    s.mean_total = double(sum) / double(s.n_total);
    if (s.n_male) s.mean_male = double(sum_m) / double(s.n_male);
    if (s.n_female) s.mean_female = double(sum_f) / double(s.n_female);
    return s;
}

int orient(int raw_score, bool swapped) { return swapped ? -raw_score : raw_score; }

bool presentation_swapped(std::uint64_t seed, std::size_t index) {
    return (splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(index)) & 1u) != 0;
}

std::vector<Trial> trials_from_manifest(const json& manifest, std::uint64_t* seed_out) {
    if (!manifest.is_object()) throw AbError(400, "manifest must be a JSON object");
    if (!manifest.contains("trials") || !manifest["trials"].is_array())
        throw AbError(400, "manifest needs a 'trials' array");
    if (manifest["trials"].empty()) throw AbError(400, "manifest has no trials");
    std::uint64_t seed = 0;
    if (manifest.contains("seed")) {
        if (!manifest["seed"].is_number_unsigned() && !manifest["seed"].is_number_integer())
            throw AbError(400, "'seed' must be a non-negative integer");
        seed = manifest["seed"].get<std::uint64_t>();
    }
    const fs::path base = manifest.value("base_dir", std::string());
    auto resolve = [&](const std::string& p) {
        const fs::path path(p);
        return (path.is_relative() && !base.empty() ? base / path : path).string();
    };

    std::vector<Trial> trials;
    std::set<std::string> ids;
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < manifest["trials"].size(); ++i) {
        const auto& j = manifest["trials"][i];
        const std::string where = "trial " + std::to_string(i);
        if (!j.is_object()) throw AbError(400, where + " is not an object");
        Trial t;
        t.trial_id = required_string(j, "trial_id", where);
        if (!ids.insert(t.trial_id).second) throw AbError(400, "duplicate trial_id '" + t.trial_id + "'");
        t.stimulus_a = resolve(required_string(j, "stimulus_a", where));
        t.stimulus_b = resolve(required_string(j, "stimulus_b", where));
        t.condition_a = j.value("condition_a", std::string("a"));
        t.condition_b = j.value("condition_b", std::string("b"));
        t.gender = parse_gender(required_string(j, "speaker_gender", where), t.trial_id);
        t.swapped = presentation_swapped(seed, i);
        for (const auto* p : {&t.stimulus_a, &t.stimulus_b})
            if (!fs::is_regular_file(*p)) missing.push_back(*p);
        trials.push_back(std::move(t));
    }
    if (!missing.empty()) {
        std::string msg = "missing audio files:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw AbError(400, msg);
    }
    if (seed_out) *seed_out = seed;
    return trials;
}

std::vector<Vote> read_vote_log(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw AbError(500, "cannot read vote log " + path.string());
    std::vector<Vote> votes;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            votes.push_back(vote_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw AbError(500, path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return votes;
}

// ─── Session ─────────────────────────────────────────────────────────────────

Session::Session(std::string id, fs::path dir, std::vector<Trial> trials, std::uint64_t seed)
    : id_(std::move(id)), dir_(std::move(dir)), trials_(std::move(trials)), seed_(seed), created_at_(utc_timestamp()) {
    fs::create_directories(dir_);
    json j = {{"session_id", id_}, {"created_at", created_at_}, {"seed", seed_}, {"trials", json::array()}};
    for (const auto& t : trials_) j["trials"].push_back(trial_json(t));
    write_json_file(dir_ / "session.json", j);
    std::ofstream(log_path(), std::ios::app);
}

std::unique_ptr<Session> Session::open(const fs::path& dir) {
    std::ifstream in(dir / "session.json");
    if (!in) throw AbError(500, "no session.json in " + dir.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw AbError(500, (dir / "session.json").string() + ": " + e.what());
    }
    std::unique_ptr<Session> s(new Session());
    s->id_ = j.at("session_id").get<std::string>();
    s->dir_ = dir;
    s->seed_ = j.at("seed").get<std::uint64_t>();
    s->created_at_ = j.value("created_at", "");
    for (const auto& t : j.at("trials")) {
        Trial tr;
        tr.trial_id = t.at("trial_id").get<std::string>();
        tr.stimulus_a = t.at("stimulus_a").get<std::string>();
        tr.stimulus_b = t.at("stimulus_b").get<std::string>();
        tr.condition_a = t.value("condition_a", "");
        tr.condition_b = t.value("condition_b", "");
        tr.gender = parse_gender(t.at("speaker_gender").get<std::string>(), tr.trial_id);
        tr.swapped = t.at("swapped").get<bool>();
        s->trials_.push_back(std::move(tr));
    }
    if (fs::exists(s->log_path())) {
        for (auto& v : read_vote_log(s->log_path())) {
            const auto idx = s->index_of(v.trial_id);
            s->voted_[v.listener_id].insert(idx);
            s->served_[v.listener_id].insert(idx);
            s->votes_.push_back(std::move(v));
        }
    }
    return s;
}

std::size_t Session::index_of(const std::string& trial_id) const {
    for (std::size_t i = 0; i < trials_.size(); ++i)
        if (trials_[i].trial_id == trial_id) return i;
    throw AbError(404, "unknown trial '" + trial_id + "'");
}

std::optional<std::pair<std::size_t, Trial>> Session::next_for(const std::string& listener) {
    if (listener.empty()) throw AbError(400, "listener id is required");
    std::unique_lock lock(mu_);
    const auto& done = voted_[listener];
    for (std::size_t i = 0; i < trials_.size(); ++i)
        if (!done.contains(i)) {
            served_[listener].insert(i);
            return std::make_pair(i, trials_[i]);
        }
    return std::nullopt;
}

std::size_t Session::completed_by(const std::string& listener) const {
    std::shared_lock lock(mu_);
    const auto it = voted_.find(listener);
    return it == voted_.end() ? 0 : it->second.size();
}

Vote Session::record_vote(const std::string& trial_id, const std::string& listener, const json& score) {
    if (listener.empty()) throw AbError(400, "listener_id is required");
    if (!score.is_number_integer()) throw AbError(400, "score must be an integer from -2 to 2");
    const auto raw = score.get<std::int64_t>();
    if (raw < -2 || raw > 2) throw AbError(400, "score " + std::to_string(raw) + " is outside -2..2");
    const auto idx = index_of(trial_id);

    std::unique_lock lock(mu_);
    if (voted_[listener].contains(idx))
        throw AbError(409, "listener '" + listener + "' already voted on trial '" + trial_id + "'");
    if (!served_[listener].contains(idx))
        throw AbError(409, "trial '" + trial_id + "' has not been served to listener '" + listener + "' yet");
    Vote v;
    v.session_id = id_;
    v.trial_id = trial_id;
    v.listener_id = listener;
    v.raw_score = static_cast<int>(raw);
    v.score = orient(v.raw_score, trials_[idx].swapped);
    v.timestamp = utc_timestamp();
    {
        std::ofstream out(log_path(), std::ios::app);
        out << to_json(v).dump() << '\n';
        out.flush();
        if (!out) throw AbError(500, "cannot append to " + log_path().string());
    }
    voted_[listener].insert(idx);
    votes_.push_back(v);
    return v;
}

Summary Session::summary() const {
    std::shared_lock lock(mu_);
    return summarize(trials_, votes_);
}

std::vector<Vote> Session::votes() const {
    std::shared_lock lock(mu_);
    return votes_;
}

fs::path Session::stimulus(const std::string& trial_id, char slot) const {
    const auto& t = trials_[index_of(trial_id)];
    if (slot != 'A' && slot != 'B') throw AbError(404, "slot must be A or B");
    const bool first = (slot == 'A') != t.swapped;
    return first ? t.stimulus_a : t.stimulus_b;
}

// ─── Store ───────────────────────────────────────────────────────────────────

Store::Store(fs::path data_dir) : dir_(std::move(data_dir)) {
    fs::create_directories(dir_);
    for (const auto& e : fs::directory_iterator(dir_))
        if (e.is_directory() && fs::exists(e.path() / "session.json")) {
            auto s = Session::open(e.path());
            sessions_.emplace(s->id(), std::move(s));
        }
}

std::string Store::create(const json& manifest) {
    std::uint64_t seed = 0;
    auto trials = trials_from_manifest(manifest, &seed);
    std::unique_lock lock(mu_);
    std::string id;
    std::random_device rd;
    do {
        char buf[20];
        const std::uint64_t r = splitmix64((std::uint64_t(rd()) << 32) ^ rd() ^ ++counter_);
        std::snprintf(buf, sizeof buf, "s%012llx", static_cast<unsigned long long>(r & 0xFFFFFFFFFFFFull));
        id = buf;
    } while (sessions_.contains(id) || fs::exists(dir_ / id));
    sessions_.emplace(id, std::make_unique<Session>(id, dir_ / id, std::move(trials), seed));
    return id;
}

Session& Store::get(const std::string& id) {
    std::shared_lock lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw AbError(404, "unknown session '" + id + "'");
    return *it->second;
}

} // namespace ccodec::abtest
