// cvit: dataset generation, training, evaluation, verification, prediction
// and plotting. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cvit/cvit.hpp"

namespace fs = std::filesystem;
using namespace cvit;

namespace {

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

std::vector<std::vector<std::string>> read_csv(const fs::path& path, std::vector<std::string>* header)
{
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    if (header) {
        if (rows.empty()) throw UsageError(path.string() + " is empty");
        *header = rows.front();
        rows.erase(rows.begin());
    }
    return rows;
}

double to_double(const std::string& s, const std::string& where)
{
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("cannot parse number '" + s + "' in " + where);
    }
}

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string task = "advection";
    std::size_t n = 0;
    std::size_t grid = 200;
    double tau = 3, d = 2, t = 0.5, c = 1;
    std::size_t modes = 0;
    std::uint64_t seed = 0;
    bool bandlimited = false;
    std::string out;
};

int run_generate(const GenerateArgs& a)
{
    if (a.task != "advection") throw UsageError("unknown task '" + a.task + "' (only advection is generated)");
    const GrfSpec spec{a.grid, a.tau, a.d, a.modes};
    const AdvectionOptions opt{a.t, a.c, a.seed, a.bandlimited ? ShiftMode::bandlimited_fallback : ShiftMode::exact};
    const auto ds = make_advection_dataset(a.n, spec, opt);
    write_dataset(a.out, ds);
    std::size_t jumps = 0;
    for (std::size_t i = 0; i < ds.samples(); ++i) jumps += discontinuity_count(ds.row(ds.u0, i));
    std::cout << "wrote " << ds.samples() << " samples (N=" << ds.grid() << ", shift=" << ds.metadata.at("shift")
              << ", mean discontinuities=" << fmt(double(jumps) / double(ds.samples())) << ") to " << a.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::size_t log_every = 100;
    std::vector<std::size_t> inject_nan;
};

int run_train(const TrainArgs& a)
{
    const auto cfg = parse_config(a.config);
    std::cout << "# resolved config\n" << cfg.echo() << std::flush;
    const auto data = read_dataset(cfg.data_path);
    const auto spec = cfg.model.to_spec(1, data.grid(), data.channels());
    Cvit model(spec);
    Rng init_rng = Rng(cfg.train.seed).substream(0xC0FFEE);
    auto params = model.init<float>(init_rng);
    std::cout << "# parameters " << params.parameter_count() << '\n';

    FieldTask task(model, data);
    FileCheckpointStore store(cfg.checkpoint_dir);
    std::set<std::size_t> pending(a.inject_nan.begin(), a.inject_nan.end());
    LoopHooks hooks;
    hooks.inject_nan = [&](std::size_t step) { return pending.erase(step) > 0; };
    hooks.decorate_checkpoint = [&](Archive& ar) { ar.f64.insert_or_assign("meta.spec", encode_spec(spec)); };
    const auto start = std::chrono::steady_clock::now();
    double window = 0;
    hooks.on_step = [&](std::size_t step, const StepResult& r) {
        if (r.blowup) {
            std::cout << "step " << step << ": blowup (loss " << r.loss << "), restarting from checkpoint\n";
            return;
        }
        window += r.loss;
        if ((step + 1) % a.log_every == 0) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::cout << "step " << step + 1 << " loss " << fmt(window / double(a.log_every)) << " lr "
                      << fmt(r.lr) << " |g| " << fmt(r.grad_norm) << " (" << fmt(secs) << " s)\n"
                      << std::flush;
            window = 0;
        }
    };
    hooks.on_restart = [&](std::size_t step) {
        window = 0;
        std::cout << "resumed at step " << step << '\n';
    };

    const auto res = train_loop(std::move(params), cfg.train, task.loss_fn(cfg.train.batch_size, cfg.train.queries),
                                store, hooks);
    const fs::path dir(cfg.checkpoint_dir);
    save_archive(dir / "final.cvc", make_model_archive(spec, res.params, res.state));
    std::ostringstream hist;
    hist << "step,loss\n";
    for (std::size_t i = 0; i < res.history.size(); ++i) hist << i << ',' << fmt(res.history[i]) << '\n';
    io::write_file_atomic(dir / "loss.csv", hist.str());
    std::cout << "done: " << res.history.size() << " steps, " << res.restarts << " restarts, final model "
              << (dir / "final.cvc").string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, data, out, baseline, split = "all";
    std::size_t rollout = 1;
};

Dataset select_split(const Dataset& ds, const std::string& split)
{
    const auto r = split_ranges(ds.samples());
    std::size_t b = 0, e = ds.samples();
    if (split == "train") e = r.train_end;
    else if (split == "val") b = r.train_end, e = r.val_end;
    else if (split == "test") b = r.val_end, e = r.test_end;
    else if (split != "all") throw UsageError("--split must be all, train, val or test");
    if (b == e) throw UsageError("split '" + split + "' is empty");
    const std::size_t w = ds.grid() * ds.channels();
    Dataset out{Tensor<float>({e - b, ds.grid(), ds.channels()}), Tensor<float>({e - b, ds.grid(), ds.channels()}),
                ds.metadata};
    std::copy_n(ds.u0.data().begin() + std::ptrdiff_t(b * w), (e - b) * w, out.u0.mutable_data().begin());
    std::copy_n(ds.target.data().begin() + std::ptrdiff_t(b * w), (e - b) * w, out.target.mutable_data().begin());
    return out;
}

int run_eval(const EvalArgs& a)
{
    if (a.checkpoint.empty() == a.baseline.empty()) throw UsageError("give exactly one of --checkpoint or --baseline");
    if (!a.baseline.empty() && a.baseline != "identity") throw UsageError("unknown baseline '" + a.baseline + "'");
    const auto ds = select_split(read_dataset(a.data), a.split);
    const std::size_t n = ds.samples(), grid = ds.grid(), ch = ds.channels();

    // truth after K steps: target for K = 1, else K-fold exact transport of u0
    Tensor<float> truth = ds.target;
    if (a.rollout > 1) {
        if (ds.metadata.count("shift") == 0 || ds.metadata.at("shift") != "exact") {
            throw UsageError("--rollout > 1 needs a dataset with an exact circular shift");
        }
        const auto cells = std::stoll(ds.metadata.at("shift_cells"));
        const auto total = static_cast<long long>((cells * static_cast<long long>(a.rollout)) % grid);
        auto td = truth.mutable_data();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t m = 0; m < grid; ++m) {
                const auto src = static_cast<std::size_t>((static_cast<long long>(m) - total + grid) % grid);
                for (std::size_t k = 0; k < ch; ++k) td[(i * grid + m) * ch + k] = ds.u0.at(i, src, k);
            }
        }
    }

    std::function<Tensor<float>(const std::vector<Tensor<float>>&)> step;
    std::optional<LoadedModel> loaded;
    const auto queries = grid_queries(grid);
    if (a.baseline == "identity") {
        step = [](const std::vector<Tensor<float>>& w) { return w.back(); };
    } else {
        loaded.emplace(load_model(load_archive(a.checkpoint)));
        step = [&](const std::vector<Tensor<float>>& w) {
            return cvit_predict(loaded->model, loaded->params, w.back(), queries);
        };
    }
    const auto frames = rollout(step, std::vector<Tensor<float>>{ds.u0}, a.rollout);
    const auto report = evaluate_metrics(frames.back(), truth);
    io::write_file_atomic(a.out, report.to_csv());
    const auto r = report.rel_l2_summary(), t = report.tv_summary();
    std::cout << "samples " << n << " rollout " << a.rollout << "\nrel_l2 mean=" << fmt(r.mean)
              << " median=" << fmt(r.median) << " worst=" << fmt(r.worst) << "\ntv mean=" << fmt(t.mean)
              << " median=" << fmt(t.median) << " worst=" << fmt(t.worst) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
    std::size_t grid = 64, modes = 8, trials = 20;
    std::uint64_t seed = 0;
};

int run_verify_fno(const VerifyArgs& a)
{
    const double worst = verify::fno_equivalence(a.grid, a.modes, a.trials, a.seed);
    std::printf("max relative discrepancy %.3e over %zu trials (N=%zu, n=%zu)\n", worst, a.trials, a.grid, a.modes);
    return worst < 1e-8 ? 0 : 2;
}

int run_verify_gradients(const VerifyArgs& a)
{
    bool ok = true;
    for (const auto& c : verify::gradient_suite(a.trials, a.seed)) {
        std::printf("%-18s %s  max rel error %.3e\n", c.name.c_str(), c.report.passed ? "ok  " : "FAIL",
                    c.report.max_rel_error);
        ok = ok && c.report.passed;
    }
    return ok ? 0 : 2;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string checkpoint, input, queries = "grid", out;
    std::size_t sample = 0;
};

int run_predict(const PredictArgs& a)
{
    const auto m = load_model(load_archive(a.checkpoint));
    const auto ds = read_dataset(a.input);
    if (a.sample >= ds.samples()) throw UsageError("--sample out of range");
    const bool on_grid = a.queries == "grid";
    Tensor<float> q;
    if (on_grid) {
        q = grid_queries(ds.grid());
    } else {
        const auto rows = read_csv(a.queries, nullptr);
        q = Tensor<float>({rows.size(), 2});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].empty() || rows[i].size() > 2) throw UsageError("query rows must be y1[,y2]");
            for (std::size_t j = 0; j < rows[i].size(); ++j) {
                const double y = to_double(rows[i][j], a.queries);
                if (y < 0 || y > 1) throw UsageError("query coordinate " + rows[i][j] + " outside [0,1]");
                q.at(i, j) = static_cast<float>(y);
            }
        }
    }
    const std::size_t w = ds.grid() * ds.channels();
    Tensor<float> frame({1, ds.grid(), ds.channels()},
                        std::vector<float>(ds.u0.data().begin() + std::ptrdiff_t(a.sample * w),
                                           ds.u0.data().begin() + std::ptrdiff_t((a.sample + 1) * w)));
    const auto pred = cvit_predict(m.model, m.params, frame, q);
    const std::size_t out_dim = pred.dim(2);
    std::ostringstream os;
    os.precision(9);
    os << "y1,y2";
    for (std::size_t k = 0; k < out_dim; ++k) os << ",pred" << k;
    if (on_grid) {
        for (std::size_t k = 0; k < out_dim; ++k) os << ",truth" << k;
    }
    os << '\n';
    for (std::size_t i = 0; i < q.dim(0); ++i) {
        os << q.at(i, 0) << ',' << q.at(i, 1);
        for (std::size_t k = 0; k < out_dim; ++k) os << ',' << pred.at(0, i, k);
        if (on_grid) {
            for (std::size_t k = 0; k < out_dim; ++k) os << ',' << ds.target.at(a.sample, i, k);
        }
        os << '\n';
    }
    io::write_file_atomic(a.out, os.str());
    std::cout << "wrote " << q.dim(0) << " predictions to " << a.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct PlotArgs {
    std::string csv, out, title;
};

// Columns y1,y2,v...: heatmap of the first value column when y2 varies,
// otherwise a line plot of every value column against y1. Any other header:
// first column is x, remaining columns are series.
int run_plot(const PlotArgs& a)
{
    std::vector<std::string> header;
    const auto rows = read_csv(a.csv, &header);
    if (header.size() < 2) throw UsageError("plot needs at least two CSV columns");
    std::vector<std::vector<double>> cols(header.size());
    for (const auto& r : rows) {
        if (r.size() != header.size()) throw UsageError("ragged CSV row in " + a.csv);
        for (std::size_t j = 0; j < r.size(); ++j) cols[j].push_back(to_double(r[j], a.csv));
    }
    std::size_t first_value = 1;
    if (header.size() >= 3 && header[0] == "y1" && header[1] == "y2") {
        first_value = 2;
        std::set<double> xs(cols[0].begin(), cols[0].end()), ys(cols[1].begin(), cols[1].end());
        if (ys.size() > 1) {
            if (xs.size() * ys.size() != rows.size()) throw UsageError("heatmap CSV must cover a full y1 x y2 grid");
            std::vector<double> xv(xs.begin(), xs.end()), yv(ys.begin(), ys.end());
            std::vector<double> values(rows.size(), 0.0);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto r = std::size_t(std::lower_bound(yv.begin(), yv.end(), cols[1][i]) - yv.begin());
                const auto c = std::size_t(std::lower_bound(xv.begin(), xv.end(), cols[0][i]) - xv.begin());
                values[(yv.size() - 1 - r) * xv.size() + c] = cols[2][i];
            }
            io::write_file_atomic(a.out, plot::heatmap(values, yv.size(), xv.size(), a.title));
            std::cout << "wrote heatmap " << yv.size() << "x" << xv.size() << " to " << a.out << '\n';
            return 0;
        }
    }
    std::vector<plot::Series> series;
    for (std::size_t j = first_value; j < header.size(); ++j) series.push_back({header[j], cols[0], cols[j]});
    io::write_file_atomic(a.out, plot::line_plot(series, a.title));
    std::cout << "wrote " << series.size() << " series to " << a.out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Continuous vision transformer operator learning toolkit"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Generate an advection dataset");
    g->add_option("--task", gen.task, "Benchmark task")->capture_default_str();
    g->add_option("--n", gen.n, "Number of samples")->required()->check(CLI::PositiveNumber);
    g->add_option("--grid", gen.grid, "Grid size N (even)")->capture_default_str();
    g->add_option("--tau", gen.tau, "GRF inverse length scale")->capture_default_str();
    g->add_option("--d", gen.d, "GRF covariance exponent")->capture_default_str();
    g->add_option("--modes", gen.modes, "GRF modes (0 = N/2)")->capture_default_str();
    g->add_option("--t", gen.t, "Target time")->capture_default_str();
    g->add_option("--c", gen.c, "Advection speed")->capture_default_str();
    g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    g->add_flag("--bandlimited", gen.bandlimited, "Allow a band-limited shift when c*t*N is not an integer");
    g->add_option("--out", gen.out, "Output dataset file")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model from a config file");
    t->add_option("--config", tr.config, "key = value config file")->required()->check(CLI::ExistingFile);
    t->add_option("--log-every", tr.log_every, "Steps between progress lines")->capture_default_str()
        ->check(CLI::PositiveNumber);
    t->add_option("--inject-nan", tr.inject_nan, "Fault injection: poison the loss at these steps (once each)");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint or baseline on a dataset");
    e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
    e->add_option("--baseline", ev.baseline, "Baseline instead of a model (identity)");
    e->add_option("--data", ev.data, "Dataset file")->required();
    e->add_option("--out", ev.out, "Metrics CSV")->required();
    e->add_option("--rollout", ev.rollout, "Auto-regressive steps")->capture_default_str()->check(CLI::PositiveNumber);
    e->add_option("--split", ev.split, "all, train, val or test")->capture_default_str();

    VerifyArgs vf;
    auto* v = app.add_subcommand("verify", "Numerical self-checks");
    v->require_subcommand(1);
    auto* vfno = v->add_subcommand("fno-equivalence", "Grid vs continuous FNO layer");
    vfno->add_option("--grid", vf.grid, "Grid size N")->capture_default_str();
    vfno->add_option("--modes", vf.modes, "Retained modes n")->capture_default_str();
    vfno->add_option("--trials", vf.trials, "Random instances")->capture_default_str();
    vfno->add_option("--seed", vf.seed, "Random seed")->capture_default_str();
    VerifyArgs vg;
    vg.trials = 10;
    auto* vgrad = v->add_subcommand("gradients", "Finite-difference gradient checks");
    vgrad->add_option("--trials", vg.trials, "Random inputs per primitive")->capture_default_str();
    vgrad->add_option("--seed", vg.seed, "Random seed")->capture_default_str();

    PredictArgs pr;
    auto* p = app.add_subcommand("predict", "Evaluate a model at query points");
    p->add_option("--checkpoint", pr.checkpoint, "Model checkpoint")->required();
    p->add_option("--input", pr.input, "Dataset file holding the input function")->required();
    p->add_option("--sample", pr.sample, "Sample index in the input file")->capture_default_str();
    p->add_option("--queries", pr.queries, "'grid' or a CSV of y1[,y2] rows in [0,1]")->capture_default_str();
    p->add_option("--out", pr.out, "Output CSV")->required();

    PlotArgs pl;
    auto* plt = app.add_subcommand("plot", "Render a CSV as SVG");
    plt->add_option("--csv", pl.csv, "Input CSV")->required();
    plt->add_option("--out", pl.out, "Output SVG")->required();
    plt->add_option("--title", pl.title, "Plot title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*g) return run_generate(gen);
        if (*t) return run_train(tr);
        if (*e) return run_eval(ev);
        if (*vfno) return run_verify_fno(vf);
        if (*vgrad) return run_verify_gradients(vg);
        if (*p) return run_predict(pr);
        if (*plt) return run_plot(pl);
    } catch (const std::invalid_argument& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    }
    return 1;
}
