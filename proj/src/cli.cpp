#include "van/cli.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "van/cost.hpp"
#include "van/gradcheck.hpp"
#include "van/io.hpp"
#include "van/lka.hpp"
#include "van/van_model.hpp"

namespace van {

namespace {

constexpr double kTrainDemoLr = 0.5;

// Deterministic 2-class toy batch: standard-normal pixels shifted by -1 for
// class 0 and +1 for class 1, labels alternating.
std::pair<TensorD, std::vector<std::size_t>> make_demo_batch(std::size_t count, std::size_t side,
                                                             std::uint64_t seed) {
    TensorD images = TensorD::random_normal({count, 3, side, side}, 0.0, 1.0, seed);
    std::vector<std::size_t> labels(count);
    const std::size_t chw = 3 * side * side;
    for (std::size_t n = 0; n < count; ++n) {
        labels[n] = n % 2;
        const double shift = labels[n] == 0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < chw; ++i) images[n * chw + i] += shift;
    }
    return {std::move(images), std::move(labels)};
}

std::string fixed6(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << v;
    return os.str();
}

std::string sci2(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

void print_summarize(std::ostream& out, const VanVariant& v) {
    out << "variant: " << v.name << "\n";
    out << std::left << std::setw(7) << "stage" << std::setw(10) << "channels" << std::setw(7)
        << "depth" << std::setw(6) << "e.r." << "downsample\n";
    for (std::size_t i = 0; i < 4; ++i) {
        const StageConfig& s = v.stages[i];
        std::ostringstream ds;
        ds << s.downsample_kernel << "x" << s.downsample_kernel << " s" << s.downsample_stride
           << " p" << s.downsample_padding;
        out << std::left << std::setw(7) << (i + 1) << std::setw(10) << s.channels << std::setw(7)
            << s.depth << std::setw(6) << s.expansion_ratio << ds.str() << "\n";
    }
    LkaConfig lka;
    lka.channels = 1;
    lka.nominal_kernel = v.lka_nominal_kernel;
    lka.dilation = v.lka_dilation;
    out << "lka: K=" << v.lka_nominal_kernel << " d=" << v.lka_dilation << " dw=" << lka.dw_kernel()
        << "x" << lka.dw_kernel() << " dwd=" << lka.dwd_kernel() << "x" << lka.dwd_kernel()
        << " dilation=" << v.lka_dilation << " span=" << receptive_span(lka) << "\n";
    out << "classes: " << v.num_classes << "\n";
    out << "layerscale_init: " << fixed6(v.layerscale_init) << "\n";
    out << "parameters (bias on): " << parameter_element_count(v) << "\n";
    out << "parameters (bias off): " << model_cost(v, 224, 224, false).total_params << "\n";
}

void print_cost_report(std::ostream& out, const VanVariant& v, std::size_t h, std::size_t w,
                       bool bias) {
    const CostReport report = model_cost(v, h, w, bias);
    out << "model: " << v.name << "  input: " << h << "x" << w
        << "  bias: " << (bias ? "on" : "off") << "\n";
    out << std::left << std::setw(44) << "layer" << std::right << std::setw(14) << "params"
        << std::setw(16) << "macs" << "\n";
    for (const CostRow& row : report.rows) {
        out << std::left << std::setw(44) << row.name << std::right << std::setw(14) << row.params
            << std::setw(16) << row.macs << "\n";
    }
    out << std::left << std::setw(44) << "total" << std::right << std::setw(14)
        << report.total_params << std::setw(16) << report.total_macs << "\n";
}

void print_table(std::ostream& out, Count kernel, const std::vector<Count>& channels) {
    const Count d = optimal_dilation(kernel);
    out << "kernel: " << kernel << "  dilation: " << d << "\n";
    out << std::left << std::setw(8) << "C" << std::right << std::setw(14) << "standard"
        << std::setw(14) << "mobilenet" << std::setw(14) << "ours" << "\n";
    for (const ComparisonRow& row : params_comparison_table(kernel, channels)) {
        out << std::left << std::setw(8) << row.channels << std::right << std::setw(14)
            << row.standard_conv << std::setw(14) << row.mobilenet << std::setw(14) << row.ours
            << "\n";
    }
}

void print_decompose(std::ostream& out, Count kernel, Count d_max) {
    const Count d = optimal_dilation(kernel, d_max);
    LkaConfig lka;
    lka.channels = 1;
    lka.nominal_kernel = static_cast<std::size_t>(kernel);
    lka.dilation = static_cast<std::size_t>(d);
    out << "kernel: " << kernel << "\n";
    out << "dilation: " << d << "\n";
    out << "dw: " << lka.dw_kernel() << "x" << lka.dw_kernel() << " dilation 1\n";
    out << "dwd: " << lka.dwd_kernel() << "x" << lka.dwd_kernel() << " dilation " << d << "\n";
    out << "span: " << receptive_span(lka) << "\n";
}

void print_shapes(std::ostream& out, const VanVariant& v, std::size_t h, std::size_t w) {
    if (h % 32 != 0 || w % 32 != 0) {
        throw GeometryError("input extents must be divisible by 32, got " + std::to_string(h) +
                            "x" + std::to_string(w));
    }
    out << "input: 3x" << h << "x" << w << "\n";
    for (std::size_t i = 0; i < 4; ++i) {
        const StageConfig& s = v.stages[i];
        h = conv_output_extent(h, s.downsample_kernel, s.downsample_stride, 1,
                               s.downsample_padding);
        w = conv_output_extent(w, s.downsample_kernel, s.downsample_stride, 1,
                               s.downsample_padding);
        out << "stage" << (i + 1) << ": " << s.channels << "x" << h << "x" << w << "\n";
    }
    out << "logits: " << v.num_classes << "\n";
}

void run_infer(std::ostream& out, const std::string& variant_arg, const std::string& weights_path,
               const std::string& image_path, bool crop) {
    const VanVariant variant = resolve_variant(variant_arg);
    const ModelWeights<float> model = load_checkpoint<float>(weights_path, variant);
    TensorF image = load_image_file(image_path);
    if (crop) image = center_crop_to_multiple_of_32(image);
    const ForwardResult<float> result = model_forward(image, model);

    for (std::size_t n = 0; n < result.logits.extent(0); ++n) {
        const std::size_t classes = result.logits.extent(1);
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c) {
            if (result.logits[n * classes + c] > result.logits[n * classes + best]) best = c;
        }
        out << "class: " << best << "\n";
        out << "logits:";
        for (std::size_t c = 0; c < classes; ++c) {
            out << " " << fixed6(result.logits[n * classes + c]);
        }
        out << "\n";
    }
}

int run_gradcheck(std::ostream& out, const std::string& op, std::uint64_t seed,
                  bool inject_fault) {
    std::vector<GradCheckReport> reports;
    if (op.empty()) {
        reports = run_all_gradchecks(seed, inject_fault);
    } else {
        reports.push_back(run_op_gradcheck(op, seed, inject_fault));
    }
    bool all_pass = true;
    for (const GradCheckReport& r : reports) {
        all_pass = all_pass && r.pass;
        out << (r.pass ? "[PASS] " : "[FAIL] ") << std::left << std::setw(26) << r.op
            << " max_rel_err=" << sci2(r.max_rel_error) << " tol=" << sci2(r.tolerance)
            << " checks=" << r.checked;
        if (!r.pass) out << " worst=" << r.worst;
        out << "\n";
    }
    return all_pass ? 0 : 2;
}

int run_train_demo(std::ostream& out, std::size_t steps, std::uint64_t seed) {
    ModelWeights<double> model = build_van<double>(van_micro(), seed);
    auto [images, labels] = make_demo_batch(8, 32, seed + 1);

    double initial = 0.0;
    double loss = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
        loss = train_micro_step(model, images, labels, kTrainDemoLr);
        if (step == 0) initial = loss;
        if (step % 10 == 0 || step + 1 == steps) {
            out << "step " << std::setw(4) << step << "  loss " << fixed6(loss) << "\n";
        }
    }
    const TensorD logits = model_logits(images, model);
    const double final_loss = softmax_cross_entropy(logits, labels);
    out << "initial " << fixed6(initial) << "  final " << fixed6(final_loss) << "\n";
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Large-kernel-attention backbone toolkit"};
    app.name("van");
    app.require_subcommand(1);

    // summarize <variant>
    std::string sum_variant;
    CLI::App* sum = app.add_subcommand("summarize", "Describe a model variant");
    sum->add_option("variant", sum_variant, "preset name or config file")->required();

    // costs <variant> --input H W [--bias]
    std::string costs_variant;
    std::vector<std::size_t> costs_input{224, 224};
    bool costs_bias = false;
    CLI::App* costs = app.add_subcommand("costs", "Per-layer parameter and MAC report");
    costs->add_option("variant", costs_variant, "preset name or config file")->required();
    costs->add_option("--input", costs_input, "input height and width")->expected(2);
    costs->add_flag("--bias", costs_bias, "include bias parameters");

    // table --kernel K --channels LIST
    Count table_kernel = 21;
    std::vector<Count> table_channels{32, 64, 128, 256, 512};
    CLI::App* table = app.add_subcommand("table", "Decomposition parameter comparison table");
    table->add_option("--kernel", table_kernel, "nominal kernel size");
    table->add_option("--channels", table_channels, "comma-separated channel counts")
        ->delimiter(',');

    // decompose --kernel K [--dmax N]
    Count dec_kernel = 21;
    Count dec_dmax = 16;
    CLI::App* dec = app.add_subcommand("decompose", "Optimal decomposition of a kernel size");
    dec->add_option("--kernel", dec_kernel, "nominal kernel size");
    dec->add_option("--dmax", dec_dmax, "largest dilation to consider");

    // shapes <variant> --input H W
    std::string shapes_variant;
    std::vector<std::size_t> shapes_input{224, 224};
    CLI::App* shapes = app.add_subcommand("shapes", "Stage output geometry");
    shapes->add_option("variant", shapes_variant, "preset name or config file")->required();
    shapes->add_option("--input", shapes_input, "input height and width")->expected(2);

    // infer <variant> --weights PATH --image PATH [--crop]
    std::string infer_variant, infer_weights, infer_image;
    bool infer_crop = false;
    CLI::App* infer = app.add_subcommand("infer", "Classify one image");
    infer->add_option("variant", infer_variant, "preset name or config file")->required();
    infer->add_option("--weights", infer_weights, "checkpoint path")->required();
    infer->add_option("--image", infer_image, "PPM (P6) or raw tensor file")->required();
    infer->add_flag("--crop", infer_crop, "center-crop extents to a multiple of 32");

    // gradcheck [--op NAME|--all] [--seed S] [--inject-fault]
    std::string gc_op;
    bool gc_all = false;
    std::uint64_t gc_seed = 0;
    bool gc_fault = false;
    CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    gc->add_option("--op", gc_op, "check one op (see op list)");
    gc->add_flag("--all", gc_all, "check every op (default)");
    gc->add_option("--seed", gc_seed, "input seed");
    gc->add_flag("--inject-fault", gc_fault, "corrupt one vjp to self-test the checker");

    // train-demo [--steps N --seed S]
    std::size_t td_steps = 50;
    std::uint64_t td_seed = 0;
    CLI::App* td = app.add_subcommand("train-demo", "Micro training loop on synthetic data");
    td->add_option("--steps", td_steps, "gradient steps");
    td->add_option("--seed", td_seed, "initialization seed");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);

        if (*sum) {
            print_summarize(out, resolve_variant(sum_variant));
        } else if (*costs) {
            print_cost_report(out, resolve_variant(costs_variant), costs_input[0], costs_input[1],
                              costs_bias);
        } else if (*table) {
            print_table(out, table_kernel, table_channels);
        } else if (*dec) {
            print_decompose(out, dec_kernel, dec_dmax);
        } else if (*shapes) {
            print_shapes(out, resolve_variant(shapes_variant), shapes_input[0], shapes_input[1]);
        } else if (*infer) {
            run_infer(out, infer_variant, infer_weights, infer_image, infer_crop);
        } else if (*gc) {
            if (!gc_op.empty() && gc_all) {
                err << "error: --op and --all are mutually exclusive\n";
                return 1;
            }
            return run_gradcheck(out, gc_op, gc_seed, gc_fault);
        } else if (*td) {
            return run_train_demo(out, td_steps, td_seed);
        }
        return 0;
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace van
