#include "planter/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "planter/io.hpp"
#include "planter/rng.hpp"
#include "planter/threading.hpp"

namespace planter::search {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kStateMagic = 0x504C4E53;  // "PLNS"
constexpr std::uint32_t kStateVersion = 1;
constexpr const char* kStateFile = "search_state.bin";

// Why the search stopped; in-progress states resume, no-improvement states
// are final, budget states may continue under a larger max_steps.
enum class StopKind : std::uint8_t { in_progress = 0, no_improvement = 1, budget = 2 };

std::string join_ints(const std::vector<int>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(v[i]);
    }
    return out;
}

/// Everything that must agree between a run and the state it resumes —
/// max_steps stays out so an exhausted budget can be raised.
std::string context_digest(const model::PlantableNetwork& initial,
                           const model::PlantableNetwork& teacher,
                           const data::LabeledDataset& train_split,
                           const data::LabeledDataset& val_split, const SearchConfig& cfg) {
    const auto& t = cfg.candidate_training;
    std::string s = initial.fingerprint() + '|' + teacher.fingerprint() + '|' +
                    train_split.name + ':' + std::to_string(train_split.size()) + '|' +
                    val_split.name + ':' + std::to_string(val_split.size()) + '|';
    s += std::to_string(cfg.groups) + ',' + std::to_string(cfg.channels_per_plant) + ',' +
         std::to_string(cfg.random_candidates.value_or(-1)) + ',' +
         io::format_double(cfg.lambda_select) + ',' + std::to_string(cfg.seed) + '|';
    s += io::format_double(t.learning_rate) + ',' + io::format_double(t.momentum) + ',' +
         io::format_double(t.weight_decay) + ',' + std::to_string(t.batch_size) + ',' +
         std::to_string(t.epochs) + ',' + join_ints(t.schedule.milestones, ';') + ',' +
         io::format_double(t.schedule.factor) + ',' + io::format_double(t.kd->lambda) + ',' +
         std::to_string(int(t.kd->kl)) + ',' + std::to_string(t.seed);
    return io::fnv1a_hex(s);
}

struct PersistedState {
    std::string context;
    double initial_val_loss = 0.0;
    std::vector<StepLog> steps;
    StopKind stop = StopKind::in_progress;
    std::string network_file;  // latest accepted network; empty = still the initial one
    double current_val_loss = 0.0;
};

void write_state(const fs::path& dir, const PersistedState& st) {
    io::ByteWriter w;
    w.u32(kStateMagic);
    w.u32(kStateVersion);
    w.str(st.context);
    w.f64(st.initial_val_loss);
    w.u32(std::uint32_t(st.steps.size()));
    for (const auto& s : st.steps) {
        w.u32(std::uint32_t(s.step));
        w.u32(std::uint32_t(s.candidates.size()));
        for (const auto& c : s.candidates) {
            w.u32(std::uint32_t(c.group));
            w.u8(c.diverged ? 1 : 0);
            w.f64(c.val_loss);
        }
        w.u32(std::uint32_t(s.chosen_group));
        w.u8(s.accepted ? 1 : 0);
        w.u32(std::uint32_t(s.channels.size()));
        for (int ch : s.channels) w.u32(std::uint32_t(ch));
        w.u64(s.parameter_count);
        w.f64(s.val_loss);
    }
    w.u8(std::uint8_t(st.stop));
    w.str(st.network_file);
    w.f64(st.current_val_loss);
    io::atomic_write_file(dir / kStateFile, w.data());
}

PersistedState read_state(const fs::path& dir) {
    io::ByteReader r(io::read_file_bytes(dir / kStateFile));
    if (r.u32() != kStateMagic) throw io::IoError("search state: bad magic");
    if (r.u32() != kStateVersion) throw io::IoError("search state: unsupported version");
    PersistedState st;
    st.context = r.str();
    st.initial_val_loss = r.f64();
    const std::uint32_t n_steps = r.u32();
    for (std::uint32_t i = 0; i < n_steps; ++i) {
        StepLog s;
        s.step = int(r.u32());
        const std::uint32_t n_cand = r.u32();
        for (std::uint32_t j = 0; j < n_cand; ++j) {
            StepCandidate c;
            c.group = int(r.u32());
            c.diverged = r.u8() != 0;
            c.val_loss = r.f64();
            s.candidates.push_back(c);
        }
        s.chosen_group = int(r.u32());
        s.accepted = r.u8() != 0;
        const std::uint32_t n_ch = r.u32();
        for (std::uint32_t j = 0; j < n_ch; ++j) s.channels.push_back(int(r.u32()));
        s.parameter_count = r.u64();
        s.val_loss = r.f64();
        st.steps.push_back(std::move(s));
    }
    st.stop = StopKind(r.u8());
    st.network_file = r.str();
    st.current_val_loss = r.f64();
    if (!r.at_end()) throw io::IoError("search state: trailing bytes");
    return st;
}

void check_geometry(const model::PlantableNetwork& a, const model::PlantableNetwork& b) {
    const auto& sa = a.spec();
    const auto& sb = b.spec();
    if (sa.input_channels != sb.input_channels || sa.input_size != sb.input_size ||
        sa.classes != sb.classes)
        throw std::invalid_argument("search: teacher and student geometry differ");
}

}  // namespace

void SearchConfig::validate(int conv_layers) const {
    if (groups < 1 || groups > conv_layers)
        throw std::invalid_argument("search: groups must lie in [1, " +
                                    std::to_string(conv_layers) + "]");
    if (channels_per_plant < 1)
        throw std::invalid_argument("search: channels_per_plant must be >= 1");
    if (random_candidates && (*random_candidates < 1 || *random_candidates > groups))
        throw std::invalid_argument("search: random candidate count must lie in [1, groups]");
    distill::LossConfig{lambda_select, distill::KlVariant::standard}.validate();
    if (max_steps < 0) throw std::invalid_argument("search: max_steps must be >= 0");
    candidate_training.validate();
    if (!candidate_training.kd)
        throw std::invalid_argument("search: candidate training must define its kd loss");
}

std::vector<std::vector<int>> group_partition(int conv_layers, int groups) {
    if (groups < 1 || groups > conv_layers)
        throw std::invalid_argument("group_partition: need 1 <= groups <= layers");
    std::vector<std::vector<int>> part(groups);
    // layer l belongs to the g with g*L <= (l-1)*G < (g+1)*L
    for (int l = 1; l <= conv_layers; ++l) part[(l - 1) * groups / conv_layers].push_back(l);
    return part;
}

std::vector<int> select_candidates(int groups, const std::optional<int>& random_k,
                                   std::uint64_t seed, int step) {
    if (!random_k) {
        std::vector<int> all(groups);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    if (*random_k < 1 || *random_k > groups)
        throw std::invalid_argument("select_candidates: k out of range");
    return rng::sample_without_replacement(groups, *random_k,
                                           rng::derive(seed, std::uint64_t(step)));
}

double selection_loss(const model::PlantableNetwork& net, const Tensor4& teacher_val_logits,
                      const data::LabeledDataset& val, const distill::LossConfig& cfg) {
    return trainer::evaluate(net, val, &teacher_val_logits, &cfg).loss;
}

std::string step_log_csv(const std::vector<StepLog>& steps) {
    std::string out =
        "step,evaluated_groups,group_val_losses,chosen_group,accepted,channels,param_count,"
        "val_loss\n";
    for (const auto& s : steps) {
        std::string groups, losses;
        for (std::size_t i = 0; i < s.candidates.size(); ++i) {
            if (i) {
                groups += ';';
                losses += ';';
            }
            groups += std::to_string(s.candidates[i].group);
            losses += io::format_double(s.candidates[i].val_loss);
        }
        out += std::to_string(s.step) + ',' + groups + ',' + losses + ',' +
               std::to_string(s.chosen_group) + ',' + (s.accepted ? "1" : "0") + ',' +
               join_ints(s.channels, ';') + ',' + std::to_string(s.parameter_count) + ',' +
               io::format_double(s.val_loss) + '\n';
    }
    return out;
}

std::string step_log_json(const std::vector<StepLog>& steps) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : steps) {
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& c : s.candidates) {
            nlohmann::json jc{{"group", c.group}, {"diverged", c.diverged}};
            // infinity has no JSON literal; diverged candidates carry null
            if (std::isfinite(c.val_loss)) jc["val_loss"] = c.val_loss;
            else jc["val_loss"] = nullptr;
            cands.push_back(std::move(jc));
        }
        arr.push_back({{"step", s.step},
                       {"candidates", std::move(cands)},
                       {"chosen_group", s.chosen_group},
                       {"accepted", s.accepted},
                       {"channels", s.channels},
                       {"param_count", s.parameter_count},
                       {"val_loss", s.val_loss}});
    }
    return arr.dump(2) + "\n";
}

SearchResult run_planting(const model::PlantableNetwork& initial,
                          const model::PlantableNetwork& teacher,
                          const data::LabeledDataset& train_split,
                          const data::LabeledDataset& val_split, const SearchConfig& cfg,
                          const fs::path& state_dir) {
    const int conv_layers = int(initial.channels().size());
    cfg.validate(conv_layers);
    check_geometry(initial, teacher);
    train_split.validate();
    val_split.validate();
    if (train_split.size() < 1 || val_split.size() < 1)
        throw std::invalid_argument("search: empty split");

    const auto partition = group_partition(conv_layers, cfg.groups);
    const trainer::TeacherCache val_cache(teacher, val_split.images);
    const distill::LossConfig select_cfg{cfg.lambda_select, cfg.candidate_training.kd->kl};

    SearchResult out{initial, {}, 0.0, 0.0, false};
    double current_loss = selection_loss(initial, val_cache.all(), val_split, select_cfg);
    out.initial_val_loss = current_loss;

    const bool persist = !state_dir.empty();
    PersistedState st;
    st.context = context_digest(initial, teacher, train_split, val_split, cfg);
    st.initial_val_loss = current_loss;
    st.current_val_loss = current_loss;

    int start_step = 0;
    if (persist) {
        fs::create_directories(state_dir);
        if (fs::exists(state_dir / kStateFile)) {
            PersistedState prev = read_state(state_dir);
            if (prev.context != st.context)
                throw io::IoError("search state in " + state_dir.string() +
                                  " belongs to a different run");
            st = std::move(prev);
            out.steps = st.steps;
            out.initial_val_loss = st.initial_val_loss;
            out.resumed = true;
            current_loss = st.current_val_loss;
            if (!st.network_file.empty())
                out.network = model::PlantableNetwork::load(state_dir / st.network_file);
            if (!out.steps.empty()) start_step = out.steps.back().step + 1;
            if (st.stop == StopKind::no_improvement) start_step = cfg.max_steps;  // final
        }
    }

    for (int step = start_step; step < cfg.max_steps; ++step) {
        const auto groups = select_candidates(cfg.groups, cfg.random_candidates, cfg.seed, step);

        struct CandidateRun {
            StepCandidate meta;
            std::optional<model::PlantableNetwork> net;
        };
        std::vector<CandidateRun> runs(groups.size());
        threading::parallel_for(int(groups.size()), [&](int i) {
            const int g = groups[i];
            runs[i].meta.group = g;
            model::PlantableNetwork cand = out.network;
            std::vector<int> grown = cand.channels();
            for (int l : partition[g]) grown[l - 1] += cfg.channels_per_plant;
            cand.plant(grown, rng::derive(cfg.seed, std::uint64_t(step), std::uint64_t(g), 0));

            trainer::TrainConfig tcfg = cfg.candidate_training;
            tcfg.seed = rng::derive(cfg.seed, std::uint64_t(step), std::uint64_t(g), 1);
            const auto trained = trainer::train(cand, &teacher, train_split, val_split, tcfg);
            if (trained.diverged) {
                runs[i].meta.diverged = true;  // val_loss stays +inf
                return;
            }
            runs[i].meta.val_loss =
                selection_loss(cand, val_cache.all(), val_split, select_cfg);
            runs[i].net = std::move(cand);
        });

        std::size_t best = 0;  // groups ascend, so strict < keeps the lowest on ties
        for (std::size_t i = 1; i < runs.size(); ++i)
            if (runs[i].meta.val_loss < runs[best].meta.val_loss) best = i;

        StepLog entry;
        entry.step = step;
        for (const auto& r : runs) entry.candidates.push_back(r.meta);
        entry.chosen_group = runs[best].meta.group;
        const bool improves = runs[best].meta.val_loss < current_loss;
        if (improves) {
            out.network = std::move(*runs[best].net);
            current_loss = runs[best].meta.val_loss;
            entry.accepted = true;
        }
        entry.channels = out.network.channels();
        entry.parameter_count = out.network.param_count();
        entry.val_loss = current_loss;
        out.steps.push_back(entry);

        if (persist) {
            if (entry.accepted) {
                st.network_file = "step_" + std::to_string(step) + ".bin";
                out.network.save(state_dir / st.network_file);
            }
            st.steps = out.steps;
            st.current_val_loss = current_loss;
            st.stop = !improves ? StopKind::no_improvement
                                : (step + 1 == cfg.max_steps ? StopKind::budget
                                                             : StopKind::in_progress);
            write_state(state_dir, st);
            io::atomic_write_file(state_dir / "step_log.csv", step_log_csv(out.steps));
            io::atomic_write_file(state_dir / "step_log.json", step_log_json(out.steps));
        }
        if (!improves) break;
    }

    out.final_val_loss = current_loss;
    return out;
}

}  // namespace planter::search
