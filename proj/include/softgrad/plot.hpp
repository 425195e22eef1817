#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "softgrad/checkpoint.hpp"
#include "softgrad/error.hpp"
#include "softgrad/metrics.hpp"

namespace softgrad {

struct LearningCurve {
    std::string env_name;
    std::vector<std::size_t> env_steps;
    std::vector<double> mean_return;  // mean across runs, no smoothing
    std::size_t num_runs = 0;
};

/// Averages the evaluation records of several runs of the same environment.
/// All runs must share the same evaluation grid.
inline LearningCurve aggregate_runs(const std::vector<std::string>& run_dirs) {
    if (run_dirs.empty()) throw ConfigError("plot: need at least one run directory");
    LearningCurve curve;
    std::vector<std::vector<double>> per_run;
    for (const auto& dir : run_dirs) {
        std::ifstream mf(dir + "/manifest.json");
        if (!mf) throw ConfigError("plot: missing manifest.json in " + dir);
        const Json manifest = Json::parse(mf);
        const std::string env = manifest.at("config").at("env").get<std::string>();
        if (curve.env_name.empty())
            curve.env_name = env;
        else if (curve.env_name != env)
            throw ConfigError("plot: run " + dir + " is for env '" + env + "', expected '" +
                              curve.env_name + "'");
        std::vector<std::size_t> steps;
        std::vector<double> values;
        for (const Json& rec : read_jsonl(dir + "/metrics.jsonl")) {
            if (rec.value("type", "") != "eval") continue;
            steps.push_back(rec.at("env_step").get<std::size_t>());
            values.push_back(rec.at("eval_return_mean").get<double>());
        }
        if (curve.env_steps.empty())
            curve.env_steps = steps;
        else if (curve.env_steps != steps)
            throw ConfigError("plot: run " + dir + " has a mismatched evaluation grid");
        per_run.push_back(std::move(values));
    }
    curve.num_runs = per_run.size();
    curve.mean_return.resize(curve.env_steps.size(), 0.0);
    for (const auto& values : per_run)
        for (std::size_t i = 0; i < values.size(); ++i) curve.mean_return[i] += values[i];
    for (auto& v : curve.mean_return) v /= static_cast<double>(curve.num_runs);
    return curve;
}

inline void write_curve_csv(std::ostream& out, const LearningCurve& curve) {
    out << "env_step,mean_eval_return,num_runs\n";
    for (std::size_t i = 0; i < curve.env_steps.size(); ++i)
        out << curve.env_steps[i] << ',' << fmt17(curve.mean_return[i]) << ',' << curve.num_runs
            << '\n';
}

/// Minimal standalone SVG line chart; no rasterization dependencies.
inline void write_curve_svg(std::ostream& out, const LearningCurve& curve) {
    const double width = 800, height = 500, margin = 70;
    const double plot_w = width - 2 * margin, plot_h = height - 2 * margin;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!curve.env_steps.empty()) {
        xmin = static_cast<double>(curve.env_steps.front());
        xmax = static_cast<double>(curve.env_steps.back());
        ymin = *std::min_element(curve.mean_return.begin(), curve.mean_return.end());
        ymax = *std::max_element(curve.mean_return.begin(), curve.mean_return.end());
    }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    const auto sx = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * plot_w; };
    const auto sy = [&](double y) { return margin + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h; };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
        << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
        << height - margin << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"" << height - 20
        << "\" text-anchor=\"middle\" font-size=\"14\">env steps</text>\n";
    out << "<text x=\"20\" y=\"" << height / 2
        << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 " << height / 2
        << ")\">mean evaluation return</text>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">"
        << curve.env_name << " (" << curve.num_runs << " runs)</text>\n";
    out << "<text x=\"" << margin << "\" y=\"" << height - margin + 20
        << "\" text-anchor=\"middle\" font-size=\"12\">" << static_cast<long long>(xmin)
        << "</text>\n";
    out << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 20
        << "\" text-anchor=\"middle\" font-size=\"12\">" << static_cast<long long>(xmax)
        << "</text>\n";
    out << "<text x=\"" << margin - 8 << "\" y=\"" << sy(ymin)
        << "\" text-anchor=\"end\" font-size=\"12\">" << fmt17(ymin).substr(0, 9) << "</text>\n";
    out << "<text x=\"" << margin - 8 << "\" y=\"" << sy(ymax)
        << "\" text-anchor=\"end\" font-size=\"12\">" << fmt17(ymax).substr(0, 9) << "</text>\n";
    if (!curve.env_steps.empty()) {
        out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < curve.env_steps.size(); ++i)
            out << sx(static_cast<double>(curve.env_steps[i])) << ',' << sy(curve.mean_return[i])
                << ' ';
        out << "\"/>\n";
    }
    out << "</svg>\n";
}

}  // namespace softgrad
