#pragma once

#include "kernelguard/types.hpp"
#include "kernelguard/eigen_qr.hpp"
#include "kernelguard/statespace.hpp"
#include "kernelguard/random.hpp"
#include "kernelguard/stats.hpp"
#include "kernelguard/synthesis.hpp"
#include "kernelguard/loopsim.hpp"
#include "kernelguard/detector.hpp"
#include "kernelguard/detect_a.hpp"
#include "kernelguard/detect_b.hpp"
#include "kernelguard/attacks.hpp"
#include "kernelguard/harness/frame.hpp"
#include "kernelguard/harness/scenario.hpp"
#include "kernelguard/harness/nodes.hpp"
#include "kernelguard/harness/transport.hpp"
#include "kernelguard/harness/runner.hpp"
