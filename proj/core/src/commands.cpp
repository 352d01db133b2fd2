// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "flexrank/checkpoint.hpp"
#include "flexrank/config.hpp"
#include "flexrank/errors.hpp"
#include "flexrank/heatmap.hpp"
#include "flexrank/importance.hpp"
#include "flexrank/trace.hpp"

namespace flexrank {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_atomic(const fs::path& path, const std::string& contents)
{
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write '" + tmp.string() + "'");
        }
        out << contents;
        out.flush();
        if (!out) {
            throw Error("write failed for '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, path);
}

// Exclusive lock file held for the lifetime of a command.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) : path_(dir / ".flexrank.lock")
    {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw Error("output directory '" + dir.string() + "' is locked by another run (" + path_.string() + ")");
        }
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;
    ~DirectoryLock()
    {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
    int fd_ = -1;
};

std::string format_metric(double v)
{
    std::ostringstream s;
    s << std::showpoint << std::setprecision(12) << v;
    return s.str();
}

} // namespace

std::string metrics_csv(const std::vector<std::string>& adapter_ids, const std::vector<MetricsRow>& rows)
{
    std::ostringstream out;
    out << "step,loss,total_rank,param_count";
    for (const auto& id : adapter_ids) {
        out << ",rank_" << id;
    }
    out << '\n';
    for (const auto& row : rows) {
        out << row.step << ',' << format_double(row.loss) << ',' << row.total_rank << ',' << row.param_count;
        for (auto r : row.ranks) {
            out << ',' << r;
        }
        out << '\n';
    }
    return out.str();
}

int cmd_train(const std::string& config_path, const TrainOptions& options, std::ostream& out, std::ostream& err)
{
    ExperimentConfig config;
    try {
        std::vector<std::string> overrides = options.overrides;
        if (options.seed) {
            overrides.push_back("seed=" + std::to_string(*options.seed));
        }
        std::optional<std::string> dir = options.output_dir;
        if (!dir && options.use_environment) {
            if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') {
                dir = env;
            }
        }
        if (dir) {
            // Quoted so the value is always read back as a string.
            overrides.push_back("output.dir=\"" + *dir + "\"");
        }
        config = parse_config(read_file(config_path), overrides);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }

    try {
        const fs::path dir(config.output.dir);
        fs::create_directories(dir);
        DirectoryLock lock(dir);

        const TrainResult result = run_training(config.train);
        const std::string hash = config_hash(config);
        std::vector<std::string> ids;
        for (const auto& a : result.adapters) {
            ids.push_back(a.id);
        }

        write_atomic(dir / config.output.effective_config, serialize_config(config));
        write_atomic(dir / config.output.trace,
                     trace_to_string(make_trace(result, hash, config.train.seed, config.train.mode)));
        write_atomic(dir / config.output.metrics, metrics_csv(ids, result.metrics));
        write_atomic(dir / config.output.checkpoint, checkpoint_to_string(result.model));

        if (result.divergence) {
            err << "training diverged at step " << result.divergence->step << ": " << result.divergence->reason
                << " (loss " << result.divergence->loss << ")\n";
            return kExitDiverged;
        }
        out << "experiment " << config.name << " finished " << result.steps_completed << " steps, "
            << result.events.size() << " allocation events\n";
        out << "final_train_loss=" << format_double(result.final_train_loss) << '\n';
        out << "final_eval_loss=" << format_double(result.final_eval_loss) << '\n';
        for (const SvdAdapter* a : result.model.adapters()) {
            out << "rank_" << a->id() << '=' << a->rank() << '\n';
        }
        out << "outputs in " << dir.string() << '\n';
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const ParameterError& e) {
        err << "parameter error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

int cmd_importance(const std::string& spectrum_path, double epsilon, std::ostream& out, std::ostream& err)
{
    try {
        if (!(epsilon > 0.0)) {
            throw ParameterError("epsilon must be positive");
        }
        std::istringstream in(read_file(spectrum_path));
        const Matrix rows = read_csv(in);
        if (rows.rows() != 1) {
            throw ParseError("spectrum file must hold exactly one row, found " + std::to_string(rows.rows()));
        }
        const Spectrum spectrum(std::vector<double>(rows.data().begin(), rows.data().end()));
        const auto values = spectrum.values();
        out << "spectral_entropy=" << format_metric(spectral_entropy(values, epsilon)) << '\n';
        out << "nuclear=" << format_metric(nuclear_importance(values)) << '\n';
        out << "frobenius=" << format_metric(frobenius_importance(values)) << '\n';
        out << "elem_energy_entropy=" << format_metric(elem_energy_entropy(values, epsilon)) << '\n';
        out << "mat_energy_entropy=" << format_metric(mat_energy_entropy(values, epsilon)) << '\n';
        out << "sensitivity=n/a\n";
        out << "degenerate=" << (is_degenerate_spectrum(values) ? "yes" : "no") << '\n';
        return kExitOk;
    } catch (const ParameterError& e) {
        err << "parameter error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const Error& e) {
        err << "parse error: " << e.what() << '\n';
        return kExitFailure;
    }
}

std::vector<std::int64_t> schedule_rows(const BudgetSchedule& schedule)
{
    std::vector<std::int64_t> rows;
    if (schedule.t_warmup > 0) {
        rows.push_back(schedule.t_warmup - 1);
    }
    rows.push_back(schedule.t_warmup);
    for (std::int64_t t = schedule.t_warmup; t < schedule.total_steps - schedule.t_final; t += schedule.delta_t) {
        rows.push_back(t);
    }
    rows.push_back(schedule.total_steps - schedule.t_final);
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    return rows;
}

int cmd_schedule(const BudgetSchedule& schedule, std::ostream& out, std::ostream& err)
{
    try {
        schedule.validate();
    } catch (const ParameterError& e) {
        err << "parameter error: " << e.what() << '\n';
        return kExitConfigError;
    }
    out << "t,budget,allocation_step\n";
    for (std::int64_t t : schedule_rows(schedule)) {
        out << t << ',' << budget(schedule, t) << ',' << (is_allocation_step(schedule, t) ? 1 : 0) << '\n';
    }
    return kExitOk;
}

int cmd_export_heatmap(const std::string& trace_path, const std::string& output_path, std::ostream& out,
                       std::ostream& err)
{
    try {
        std::istringstream in(read_file(trace_path));
        const HeatmapTable table = build_heatmap(read_trace(in));
        const std::string csv = heatmap_to_csv(table);
        if (output_path.empty()) {
            out << csv;
        } else {
            write_atomic(output_path, csv);
        }
        return kExitOk;
    } catch (const std::exception& e) {
        err << "replay error: " << e.what() << '\n';
        return kExitFailure;
    }
}

int cmd_replay_verify(const std::string& trace_path, const std::string& checkpoint_path, std::ostream& out,
                      std::ostream& err)
{
    try {
        std::istringstream in(read_file(trace_path));
        const Trace trace = read_trace(in);
        VerifyReport report = verify_trace(trace);
        if (!checkpoint_path.empty()) {
            std::istringstream cin(read_file(checkpoint_path));
            const Checkpoint cp = read_checkpoint(cin);
            for (std::size_t i = 0; i < trace.header.adapters.size(); ++i) {
                const auto& id = trace.header.adapters[i].id;
                auto it = std::find_if(cp.adapters.begin(), cp.adapters.end(),
                                       [&](const SvdAdapter& a) { return a.id() == id; });
                if (it == cp.adapters.end()) {
                    report.problems.push_back("checkpoint has no adapter '" + id + "'");
                } else if (i < report.final_ranks.size() && it->rank() != report.final_ranks[i]) {
                    report.problems.push_back("adapter '" + id + "': checkpoint rank " + std::to_string(it->rank()) +
                                              " vs replayed " + std::to_string(report.final_ranks[i]));
                }
            }
        }
        for (const auto& p : report.problems) {
            err << "violation: " << p << '\n';
        }
        out << "events=" << trace.events.size() << '\n';
        out << "result=" << (report.ok() ? "ok" : "failed") << '\n';
        return report.ok() ? kExitOk : kExitFailure;
    } catch (const std::exception& e) {
        err << "replay error: " << e.what() << '\n';
        return kExitFailure;
    }
}

} // namespace flexrank
