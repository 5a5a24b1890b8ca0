#include "cimnas/report.hpp"

#include "cimnas/error.hpp"
#include "cimnas/serialization.hpp"

#include <cstdio>

namespace cimnas {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string bits(int i, int f) { return std::to_string(i) + "." + std::to_string(f); }

const char* kHeader = "episode,phase,batch,feasible,failed,alpha_clean,alpha_noisy,alpha_std,reward,latency_ns,"
                      "energy_pj,area_um2,edp_pj_ns,throughput_tops,efficiency_tops_per_w,seed,parent,candidate\n";

std::string row(const HistoryRecord& r) {
    std::string s = std::to_string(r.episode) + "," + r.phase + "," + (r.batch ? std::to_string(*r.batch) : "") + "," +
                    (r.eval.feasible ? "1" : "0") + "," + (r.eval.failed ? "1" : "0") + "," + num(r.eval.alpha_clean) +
                    "," + num(r.eval.alpha_noisy) + "," + num(r.eval.alpha_std) + "," + num(r.reward) + ",";
    if (r.eval.metrics) {
        const auto& m = *r.eval.metrics;
        s += num(m.latency_ns) + "," + num(m.energy_pj) + "," + num(m.area_um2) + "," + num(m.edp_pj_ns) + "," +
             num(m.throughput_tops) + "," + num(m.efficiency_tops_per_w) + ",";
    } else {
        s += ",,,,,,";
    }
    s += std::to_string(r.seed) + "," + (r.parent ? std::to_string(*r.parent) : "") + "," +
         candidate_summary(r.candidate) + "\n";
    return s;
}

} // namespace

std::string candidate_summary(const Candidate& c) {
    std::string s;
    for (std::size_t i = 0; i < c.arch.size(); ++i) {
        if (i) s += ';';
        const auto& l = c.arch.layers[i];
        if (const auto* conv = std::get_if<ConvLayer>(&l)) {
            s += "conv" + std::to_string(conv->filter_h) + "x" + std::to_string(conv->filter_w) + "x" +
                 std::to_string(conv->filters) + "p" + (conv->pool ? "1" : "0");
        } else if (const auto* d = std::get_if<DenseLayer>(&l)) {
            s += "fc" + std::to_string(d->neurons);
        } else {
            s += "out" + std::to_string(std::get<OutputLayer>(l).classes);
        }
        if (c.quant && i < c.quant->size()) {
            const auto& q = (*c.quant)[i];
            s += "/w" + bits(q.weight_int, q.weight_frac) + "/a" + bits(q.act_int, q.act_frac);
        }
    }
    s += "@" + std::to_string(c.device);
    return s;
}

std::string report_csv(const SearchHistory& history) {
    std::string s = kHeader;
    for (const auto& r : history) s += row(r);
    return s;
}

std::string pareto_csv(const SearchHistory& front) { return report_csv(front); }

std::string plot_csv(const SearchHistory& history, Metric x) {
    std::string s = std::string("episode,phase,error,") + to_string(x) + "\n";
    for (const auto& r : history) {
        const auto acc = metric_value(r, Metric::AlphaNoisy);
        const auto v = metric_value(r, x);
        if (!acc || !v) continue;
        s += std::to_string(r.episode) + "," + r.phase + "," + num(1.0 - *acc) + "," + num(*v) + "\n";
    }
    return s;
}

std::vector<std::filesystem::path> write_report(const std::filesystem::path& run_dir) {
    const auto log = run_dir / "history.jsonl";
    if (!std::filesystem::exists(log)) throw DataError("no history.jsonl in " + run_dir.string());
    const SearchHistory h = read_history(log);
    if (h.empty()) throw DataError(log.string() + " has no records");
    std::vector<std::filesystem::path> out{run_dir / "report.csv", run_dir / "error_vs_latency.csv",
                                           run_dir / "error_vs_area.csv", run_dir / "error_vs_energy.csv"};
    write_text_file(out[0], report_csv(h));
    write_text_file(out[1], plot_csv(h, Metric::Latency));
    write_text_file(out[2], plot_csv(h, Metric::Area));
    write_text_file(out[3], plot_csv(h, Metric::Energy));
    return out;
}

} // namespace cimnas
