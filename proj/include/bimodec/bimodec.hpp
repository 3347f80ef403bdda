#pragma once

#include "bimodec/core/error.hpp"
#include "bimodec/core/parallel.hpp"
#include "bimodec/core/random.hpp"
#include "bimodec/core/recording.hpp"
#include "bimodec/core/session.hpp"
#include "bimodec/core/time_series.hpp"
#include "bimodec/core/epoch.hpp"
#include "bimodec/core/detrend.hpp"
#include "bimodec/core/resample.hpp"
#include "bimodec/dsp/iir.hpp"
#include "bimodec/dsp/hilbert.hpp"
#include "bimodec/dsp/fastica.hpp"
#include "bimodec/synth/synth.hpp"
#include "bimodec/pipeline/config.hpp"
#include "bimodec/pipeline/preprocess.hpp"
#include "bimodec/pipeline/session.hpp"
#include "bimodec/features/features.hpp"
#include "bimodec/decode/windows.hpp"
#include "bimodec/decode/lasso.hpp"
#include "bimodec/decode/autograd.hpp"
#include "bimodec/decode/cnnatt.hpp"
#include "bimodec/decode/decoder.hpp"
#include "bimodec/eval/metrics.hpp"
#include "bimodec/eval/experiment.hpp"
#include "bimodec/eval/sensitivity.hpp"
#include "bimodec/eval/latency.hpp"
#include "bimodec/eval/report.hpp"
#include "bimodec/io/files.hpp"
#include "bimodec/io/dataset.hpp"
#include "bimodec/io/checkpoint.hpp"
#include "bimodec/io/svg.hpp"
#include "bimodec/app/config.hpp"
