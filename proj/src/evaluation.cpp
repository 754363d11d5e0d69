#include "c4av/evaluation.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

using nlohmann::json;

namespace c4av {

std::size_t argmax_index(const std::vector<ScoredRegion>& scored) {
    if (scored.empty()) throw std::runtime_error("argmax over an empty score list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scored.size(); ++i)
        if (scored[i].score > scored[best].score) best = i;
    return best;
}

Prediction predict(const Model& model, const Sample& sample, bool parallel) {
    if (sample.proposals.empty())
        throw std::runtime_error("predict: sample " + sample.command.id + " has no proposals");
    auto scored = model.forward(sample, parallel);
    return {sample.command.id, scored[argmax_index(scored)].box};
}

EvalReport ap50(const std::vector<Prediction>& predictions,
                const std::map<std::string, Box>& gts, double threshold) {
    std::set<std::string> seen;
    std::string missing, extra;
    for (const auto& p : predictions) {
        if (!seen.insert(p.command_id).second)
            throw std::runtime_error("duplicate prediction for command id " + p.command_id);
        if (!gts.count(p.command_id)) extra += " " + p.command_id;
    }
    for (const auto& [id, box] : gts)
        if (!seen.count(id)) missing += " " + id;
    if (!missing.empty() || !extra.empty())
        throw std::runtime_error("prediction/ground-truth id mismatch;" +
                                 (missing.empty() ? "" : " missing:" + missing) +
                                 (extra.empty() ? "" : " extra:" + extra));

    EvalReport report;
    report.num_commands = static_cast<int>(predictions.size());
    int correct = 0;
    for (const auto& p : predictions) {
        double overlap = iou(p.box, gts.at(p.command_id));
        bool ok = overlap >= threshold;
        correct += ok ? 1 : 0;
        report.per_command.push_back({p.command_id, overlap, ok});
    }
    report.ap50 = report.num_commands ? static_cast<double>(correct) / report.num_commands : 0.0;
    return report;
}

double proposal_oracle(const std::vector<Sample>& samples, double threshold) {
    if (samples.empty()) return 0.0;
    int hits = 0;
    for (const auto& s : samples) {
        if (!s.command.gt_box)
            throw std::runtime_error("proposal_oracle: sample " + s.command.id +
                                     " has no ground-truth box");
        bool hit = false;
        for (const auto& p : s.proposals)
            if (iou(p.box, *s.command.gt_box) >= threshold) hit = true;
        hits += hit ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

std::map<std::string, Box> ground_truth_map(const std::vector<Sample>& samples) {
    std::map<std::string, Box> gts;
    for (const auto& s : samples) {
        if (!s.command.gt_box)
            throw std::runtime_error("sample " + s.command.id + " has no ground-truth box");
        gts[s.command.id] = *s.command.gt_box;
    }
    return gts;
}

EvalReport evaluate_model(const Model& model, const std::vector<Sample>& samples,
                          double threshold, bool parallel) {
    std::vector<Prediction> preds(samples.size());
    std::string error;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) {
        try {
            preds[i] = predict(model, samples[i], false);
        } catch (const std::exception& e) {
#pragma omp critical
            error = e.what();
        }
    }
    if (!error.empty()) throw std::runtime_error(error);
    EvalReport report = ap50(preds, ground_truth_map(samples), threshold);
    report.oracle_rate = proposal_oracle(samples, threshold);
    return report;
}

void write_submission(const std::vector<Prediction>& predictions, const std::string& path) {
    json j = json::object();
    for (const auto& p : predictions) {
        if (j.contains(p.command_id))
            throw std::runtime_error("duplicate command id " + p.command_id);
        j[p.command_id] = {p.box.x, p.box.y, p.box.w, p.box.h};
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

std::vector<Prediction> read_submission(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing file: " + path);
    json j;
    std::set<std::string> keys;
    std::string duplicate;
    // the default object representation silently merges duplicate keys, so
    // they are detected during the parse
    auto cb = [&](int depth, json::parse_event_t event, json& parsed) {
        if (event == json::parse_event_t::key && depth == 1) {
            std::string key = parsed.get<std::string>();
            if (!keys.insert(key).second && duplicate.empty()) duplicate = key;
        }
        return true;
    };
    try {
        j = json::parse(in, cb);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed submission " + path + ": " + e.what());
    }
    if (!duplicate.empty())
        throw std::runtime_error("duplicate command id \"" + duplicate + "\" in " + path);
    if (!j.is_object()) throw std::runtime_error("submission must be a JSON object: " + path);
    std::vector<Prediction> preds;
    for (const auto& [id, arr] : j.items()) {
        if (!arr.is_array() || arr.size() != 4)
            throw std::runtime_error("submission entry \"" + id + "\" must be a 4-element array");
        for (const auto& v : arr)
            if (!v.is_number())
                throw std::runtime_error("submission entry \"" + id +
                                         "\" has a non-numeric coordinate");
        Box b{arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>(),
              arr[3].get<double>()};
        if (!b.valid())
            throw std::runtime_error("submission entry \"" + id + "\" has a malformed box");
        preds.push_back({id, b});
    }
    return preds;
}

}  // namespace c4av
