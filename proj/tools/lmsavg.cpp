// lmsavg: step-size analysis, closed-form predictions and simulations for
// averaged constant-step-size LMS.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "lmsavg/cli.hpp"

namespace {

void emit(const std::string &text, const std::string &path) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(path);
    if (!f) throw lmsavg::DataError("cannot write " + path);
    f << text;
}

void warn(const std::vector<std::string> &warnings) {
    for (const auto &w : warnings) std::cerr << "warning: " << w << "\n";
}

// Manifest reader: a `key = value` file whose bare keys belong to the
// subcommand being run. Values given as flags take precedence.
class ManifestConfig : public CLI::ConfigTOML {
  public:
    explicit ManifestConfig(const CLI::App &app) : app_(app) {}

    std::vector<CLI::ConfigItem> from_config(std::istream &input) const override {
        auto items = CLI::ConfigTOML::from_config(input);
        const auto subs = app_.get_subcommands();
        if (subs.empty()) return items;
        for (auto &item : items)
            if (item.parents.empty() && item.name != "++" && item.name != "--") item.parents = {subs.front()->get_name()};
        return items;
    }

  private:
    const CLI::App &app_;
};

// Options shared by the experiment commands.
void add_common(CLI::App *sub, lmsavg::Manifest &mf) {
    sub->fallthrough();
    sub->add_option("--spec", mf.spec, "synthetic spec: identity | harmonic | scalar | rademacher")
        ->capture_default_str();
    sub->add_option("--dim", mf.dim, "dimension of the synthetic spec")->capture_default_str();
    sub->add_option("--sigma", mf.sigma, "noise standard deviation of the synthetic spec")->capture_default_str();
    sub->add_option("--data", mf.data, "data file (overrides --spec)");
    sub->add_option("--format", mf.format, "data format: csv | libsvm")->capture_default_str();
    sub->add_option("--seed", mf.seed, "master seed")->capture_default_str();
    sub->add_option("--out", mf.out, "output file (default: standard output)");
    sub->add_option("--reweight-samples", mf.reweight_samples,
                    "Monte Carlo draws for reweighted Gaussian moments")
        ->capture_default_str();
}

void add_schedule(CLI::App *sub, lmsavg::Manifest &mf) {
    sub->add_option("--gamma", mf.gamma, "step-size; a 'gmax' suffix means a fraction of gamma_max (repeatable)")
        ->capture_default_str();
    sub->add_option("--n-max", mf.n_max, "largest iteration count")->capture_default_str();
    sub->add_option("--points", mf.points, "number of log-spaced iteration counts")->capture_default_str();
}

void add_simulation(CLI::App *sub, lmsavg::Manifest &mf) {
    sub->add_option("--replicates", mf.replicates, "Monte Carlo replicates")->capture_default_str();
    sub->add_option("--threads", mf.threads, "worker threads (0: all cores)")->capture_default_str();
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Averaged constant-step-size LMS: step-sizes, exact covariances, simulations and sampling"};
    app.require_subcommand(1);
    app.set_config("--manifest", "", "key = value file with default flag values (e.g. n-max = 1000)");
    app.config_formatter(std::make_shared<ManifestConfig>(app));
    lmsavg::Manifest mf;
    std::string plot_title;

    auto *gm = app.add_subcommand("gamma-max", "maximal step-sizes per sampling scheme");
    add_common(gm, mf);
    gm->add_option("--scheme", mf.scheme, "uniform | bias-opt | variance-opt | class-weighted (repeatable)");

    auto *run = app.add_subcommand("run", "Monte Carlo excess-risk trajectories");
    add_common(run, mf);
    add_schedule(run, mf);
    add_simulation(run, mf);
    run->add_option("--mode", mf.mode, "bias | variance | total | all")->capture_default_str();
    run->add_option("--scheme", mf.scheme, "uniform | bias-opt | variance-opt | class-weighted (repeatable)");

    auto *predict = app.add_subcommand("predict", "exact and asymptotic excess-risk curves");
    add_common(predict, mf);
    add_schedule(predict, mf);

    auto *sampling = app.add_subcommand("sampling", "compare sampling schemes");
    add_common(sampling, mf);
    add_schedule(sampling, mf);
    add_simulation(sampling, mf);
    sampling->add_option("--scheme", mf.scheme, "uniform | bias-opt | variance-opt | class-weighted (repeatable)");

    auto *plot = app.add_subcommand("plot", "render a run or predict CSV as a log-log SVG");
    plot->add_option("--input", mf.input, "CSV produced by run, predict or sampling")->required();
    plot->add_option("--out", mf.out, "SVG output path")->required();
    plot->add_option("--title", plot_title, "figure title");

    auto *ingest = app.add_subcommand("ingest", "load a data file and report its moments");
    ingest->add_option("--data", mf.data, "data file")->required();
    ingest->add_option("--format", mf.format, "csv | libsvm")->capture_default_str();
    ingest->add_option("--out", mf.out, "export the rows as dense CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 1;
    }

    try {
        lmsavg::CommandOutput result;
        if (*gm) {
            result = lmsavg::cmd_gamma_max(mf);
        } else if (*run) {
            result = lmsavg::cmd_run(mf);
        } else if (*predict) {
            result = lmsavg::cmd_predict(mf);
        } else if (*sampling) {
            result = lmsavg::cmd_sampling(mf);
        } else if (*plot) {
            std::ifstream in(mf.input);
            if (!in) throw lmsavg::DataError("cannot open " + mf.input);
            emit(lmsavg::cmd_plot(in, plot_title), mf.out);
            return 0;
        } else if (*ingest) {
            const auto out = lmsavg::cmd_ingest(mf);
            std::cout << out.report;
            if (!mf.out.empty()) emit(out.csv, mf.out);
            return 0;
        }
        warn(result.warnings);
        if (!mf.out.empty() && *gm) std::cout << result.table.str();
        emit(result.table.str(), mf.out);
    } catch (const lmsavg::Error &e) {
        const int status = lmsavg::exit_status(e);
        std::cerr << (status == 1 ? "error: " : status == 3 ? "numerical error: " : "data error: ") << e.what()
                  << "\n";
        return status;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
