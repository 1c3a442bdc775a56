// C boundary around the solver library: opaque context, status codes, and
// file-based results. Exceptions stop here.
#include "ranopt/ranopt.h"

#include <exception>
#include <filesystem>
#include <new>
#include <stdexcept>
#include <string>
#include <utility>

#include "config.hpp"
#include "csv.hpp"
#include "harness.hpp"

struct ranopt_ctx {
  ranopt::Config config;
  ranopt::ChapterRun last;
  bool has_run = false;
  std::string error;
};

namespace {

ranopt_status fail(ranopt_ctx* ctx, ranopt_status status, const char* what) {
  ctx->error = what;
  return status;
}

// Runs the body under the standard exception-to-status mapping: argument
// problems (config values, bad keys) come out as invalid-argument, anything
// else a solver raises as solver error. I/O is classified at the call sites
// that actually touch files.
template <typename Body>
ranopt_status guarded(ranopt_ctx* ctx, Body&& body) {
  if (!ctx) return RANOPT_BAD_HANDLE;
  ctx->error.clear();
  try {
    return body();
  } catch (const std::logic_error& e) {
    return fail(ctx, RANOPT_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(ctx, RANOPT_SOLVER_ERROR, e.what());
  } catch (...) {
    return fail(ctx, RANOPT_SOLVER_ERROR, "unknown failure");
  }
}

ranopt_status require_arg(ranopt_ctx* ctx, const void* p, const char* what) {
  if (p) return RANOPT_OK;
  return fail(ctx, RANOPT_INVALID_ARGUMENT, what);
}

}  // namespace

extern "C" {

ranopt_ctx* ranopt_create(void) { return new (std::nothrow) ranopt_ctx(); }

void ranopt_destroy(ranopt_ctx* ctx) { delete ctx; }

const char* ranopt_last_error(const ranopt_ctx* ctx) {
  return ctx ? ctx->error.c_str() : "null context";
}

ranopt_status ranopt_load_config_file(ranopt_ctx* ctx, const char* path) {
  return guarded(ctx, [&]() -> ranopt_status {
    if (require_arg(ctx, path, "path is null") != RANOPT_OK)
      return RANOPT_INVALID_ARGUMENT;
    std::string text;
    try {
      text = ranopt::read_text_file(path);
    } catch (const std::exception& e) {
      return fail(ctx, RANOPT_IO_ERROR, e.what());
    }
    ctx->config = ranopt::Config::parse(text);
    return RANOPT_OK;
  });
}

ranopt_status ranopt_set(ranopt_ctx* ctx, const char* key, const char* value) {
  return guarded(ctx, [&]() -> ranopt_status {
    if (require_arg(ctx, key, "key is null") != RANOPT_OK ||
        require_arg(ctx, value, "value is null") != RANOPT_OK)
      return RANOPT_INVALID_ARGUMENT;
    ctx->config.set(key, std::string(value));
    return RANOPT_OK;
  });
}

ranopt_status ranopt_run(ranopt_ctx* ctx, const char* out_csv,
                         const char* trace_csv) {
  return guarded(ctx, [&]() -> ranopt_status {
    ranopt::ChapterRun run = ranopt::run_chapter(ctx->config);
    try {
      if (out_csv) ranopt::write_text_file(out_csv, run.results_csv);
      if (trace_csv) ranopt::write_text_file(trace_csv, run.trace_csv);
    } catch (const std::exception& e) {
      return fail(ctx, RANOPT_IO_ERROR, e.what());
    }
    ctx->last = std::move(run);
    ctx->has_run = true;
    return RANOPT_OK;
  });
}

ranopt_status ranopt_metric_count(ranopt_ctx* ctx, size_t* count) {
  return guarded(ctx, [&]() -> ranopt_status {
    if (require_arg(ctx, count, "count is null") != RANOPT_OK)
      return RANOPT_INVALID_ARGUMENT;
    if (!ctx->has_run)
      return fail(ctx, RANOPT_INVALID_ARGUMENT, "no run has completed");
    *count = ctx->last.metrics.size();
    return RANOPT_OK;
  });
}

ranopt_status ranopt_metric_name(ranopt_ctx* ctx, size_t index,
                                 const char** name) {
  return guarded(ctx, [&]() -> ranopt_status {
    if (require_arg(ctx, name, "name is null") != RANOPT_OK)
      return RANOPT_INVALID_ARGUMENT;
    if (!ctx->has_run)
      return fail(ctx, RANOPT_INVALID_ARGUMENT, "no run has completed");
    if (index >= ctx->last.metrics.size())
      return fail(ctx, RANOPT_INVALID_ARGUMENT, "metric index out of range");
    *name = ctx->last.metrics[index].first.c_str();
    return RANOPT_OK;
  });
}

ranopt_status ranopt_metric(ranopt_ctx* ctx, const char* name, double* value) {
  return guarded(ctx, [&]() -> ranopt_status {
    if (require_arg(ctx, name, "name is null") != RANOPT_OK ||
        require_arg(ctx, value, "value is null") != RANOPT_OK)
      return RANOPT_INVALID_ARGUMENT;
    if (!ctx->has_run)
      return fail(ctx, RANOPT_INVALID_ARGUMENT, "no run has completed");
    for (const auto& [metric, v] : ctx->last.metrics)
      if (metric == name) {
        *value = v;
        return RANOPT_OK;
      }
    return fail(ctx, RANOPT_INVALID_ARGUMENT,
                ("no metric named '" + std::string(name) + "'").c_str());
  });
}

ranopt_status ranopt_run_sweep(ranopt_ctx* ctx, const char* spec_path,
                               const char* out_dir) {
  return guarded(ctx, [&]() -> ranopt_status {
    if (require_arg(ctx, spec_path, "spec path is null") != RANOPT_OK ||
        require_arg(ctx, out_dir, "output directory is null") != RANOPT_OK)
      return RANOPT_INVALID_ARGUMENT;
    std::string text;
    try {
      text = ranopt::read_text_file(spec_path);
    } catch (const std::exception& e) {
      return fail(ctx, RANOPT_IO_ERROR, e.what());
    }
    const auto cfg = ranopt::Config::parse(text);
    auto spec = ranopt::ExperimentSpec::from_config(cfg);
    ranopt::validate_spec(spec);
    const auto report = ranopt::run_experiment(spec);
    try {
      std::filesystem::create_directories(out_dir);
      ranopt::write_text_file(std::string(out_dir) + "/report.csv",
                              ranopt::report_to_csv(report));
    } catch (const std::exception& e) {
      return fail(ctx, RANOPT_IO_ERROR, e.what());
    }
    return RANOPT_OK;
  });
}

}  // extern "C"
