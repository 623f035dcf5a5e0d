#pragma once

#include "denseseg/core/error.hpp"
#include "denseseg/core/tensor.hpp"
#include "denseseg/core/tape.hpp"
#include "denseseg/core/ops.hpp"
#include "denseseg/core/gradcheck.hpp"
#include "denseseg/nn/conv3d.hpp"
#include "denseseg/nn/batch_norm.hpp"
#include "denseseg/nn/activation.hpp"
#include "denseseg/nn/upsample.hpp"
#include "denseseg/nn/softmax.hpp"
#include "denseseg/arch/hyperparams.hpp"
#include "denseseg/arch/network_spec.hpp"
#include "denseseg/arch/param_store.hpp"
#include "denseseg/arch/network.hpp"
#include "denseseg/arch/audit.hpp"
#include "denseseg/arch/checkpoint.hpp"
#include "denseseg/io/volume.hpp"
#include "denseseg/io/vvol.hpp"
#include "denseseg/io/phantom.hpp"
#include "denseseg/io/manifest.hpp"
#include "denseseg/train/config.hpp"
#include "denseseg/train/init.hpp"
#include "denseseg/train/preprocess.hpp"
#include "denseseg/train/adam.hpp"
#include "denseseg/train/trainer.hpp"
#include "denseseg/eval/sliding_window.hpp"
#include "denseseg/eval/metrics.hpp"
