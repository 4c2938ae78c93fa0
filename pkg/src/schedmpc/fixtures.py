"""Named plant fixtures and regression baselines.

The plant is the classic linearized unstable batch reactor benchmark
(Rosenbrock's example, as used throughout the networked-control literature,
e.g. Walsh/Ye/Bushnell); it ships here in continuous time and is discretized
on demand with the zero-order-hold map.  The reference trajectory below is a
frozen baseline for the two-reactor scheduling benchmark; optimizer
tie-breaking can legitimately diverge from it, so comparisons against it are
soft.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .numerics import zoh_discretize

# Continuous-time linearized batch reactor (4 states, 2 inputs).
BATCH_REACTOR_AC = np.array([
    [1.38, -0.2077, 6.715, -5.676],
    [-0.5814, -4.29, 0.0, 0.675],
    [1.067, 4.273, -6.654, 5.893],
    [0.048, 4.273, 1.343, -2.104],
])
BATCH_REACTOR_BC = np.array([
    [0.0, 0.0],
    [5.679, 0.0],
    [1.136, -3.146],
    [1.136, 0.0],
])

DEFAULT_SAMPLING_PERIOD = 0.1


def batch_reactor(h=DEFAULT_SAMPLING_PERIOD, copies=1):
    """ZOH-discretized batch reactor; ``copies`` stacks decoupled replicas."""
    A, B = zoh_discretize(BATCH_REACTOR_AC, BATCH_REACTOR_BC, h)
    if copies == 1:
        return A, B
    return (scipy.linalg.block_diag(*[A] * copies),
            scipy.linalg.block_diag(*[B] * copies))


# Reference closed-loop run of the two-reactor scheduling benchmark
# (horizon 3, x(0) = [1 0 1 0 1 0 1 0], Q = diag(I4, 10 I4),
# R = diag(10, 0.1, 1, 1), round-robin base schedule): states x(k) for
# k = 0..29 and the actuator applied at each step.
TWO_REACTOR_REFERENCE_STATES = np.array([
    [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
    [1.68976501003236, -0.0624391831297391, 0.636786853078522, 0.0886821265819751, 1.05645023133529, -0.0534412139015044, -1.06450619511143, -0.0279120305555201],
    [1.38433496255331, -0.117064386651565, -1.90945796167701, -0.0548143932941074, 0.711319145289463, -0.0796798285041458, -0.544889438302398, -0.137329304618717],
    [0.676140492655575, -0.130992410495177, -1.02521365706411, -0.257162885305943, 0.452409261685577, -0.0894263506251847, -0.766195255978025, -0.222317841264959],
    [0.375690384383584, -0.12593788023278, -0.665470163631382, -0.354321970367756, 0.233673981450337, 0.232782672857166, -0.363837015408706, -0.141375929101346],
    [0.246063895583125, 0.00147712114206311, -0.468041922966507, -0.348784950931788, 0.146536757682211, 0.137410873443264, -0.162228273839408, -0.0746780078753852],
    [0.191148459318153, -0.0278929143816923, -0.376513109051232, -0.33772031291971, 0.0867421277702697, 0.0811020123508599, -0.151563650310973, -0.0380589089524459],
    [0.169685489529069, 0.051057555049447, -0.291234601358185, -0.286222406971445, 0.0401292689151472, 0.0485596331426108, -0.0657380501096553, -0.0187249879050653],
    [0.122189318513458, 0.0113673103745472, -0.361565893101762, -0.260267794434767, 0.0212718500456778, 0.0296555311110565, -0.0246852857401762, -0.00552000365039691],
    [0.0645023694653307, 0.0434092545804027, -0.2643951890381, -0.224940036756437, 0.0147027248934283, 0.018469257521872, -0.00439225943661161, 0.00303627233568767],
    [0.0319296266262983, 0.0568843336496073, -0.195451466374841, -0.180856120547742, 0.0138774764647203, 0.0117034752695916, 0.00600717221697318, 0.00837001091459055],
    [0.0109963058917136, 0.0626249752682255, -0.141011649704119, -0.13581507769546, 0.0160643829510967, 0.00747983606238354, 0.0115466835270904, 0.0115614754902135],
    [-0.0043158570777787, 0.0341173997676043, -0.109160584892057, -0.106968741132355, 0.0127211290331052, 0.00481224412820902, -0.00541762158707693, 0.0119762007892326],
    [-0.0175850015021914, 0.0333442622258399, -0.0837417162489131, -0.0819211842970937, 0.00739316918409134, 0.00332477017780645, 0.00412338162179456, 0.0112948438438771],
    [-0.0169582671399418, 0.0186855862803134, -0.0321373428275302, -0.0633869930253297, 0.00626934782194533, 0.00246728791835174, 0.00830745249904527, 0.0110726059217441],
    [-0.0108290738251241, 0.00970982607102607, -0.0372833932088159, -0.0504379352177583, 0.0038193122982233, 0.00194544361200899, 0.00118309835298791, 0.010353026204529],
    [-0.0114755716258896, 0.00430372598553834, -0.0377580088309894, -0.0429110648256438, 0.000858939862518171, -0.00594745382398032, 0.00206908797190053, 0.00605593915879288],
    [-0.00820774601045215, 0.00112115447374284, -0.0173544436913513, -0.0370250914786168, -0.000380440813841525, -0.00363254080000959, 0.00154800801456914, 0.00333439460138775],
    [-0.00355813274924421, 0.00490821773083061, -0.0214787147519713, -0.0299638691136135, -0.0010063061669691, -0.00219758000173485, 0.00089657519966584, 0.00175295464975895],
    [-0.00304277250540763, 0.00656468959053647, -0.0199649121610224, -0.0235641015236636, -0.00143708896515959, -0.00130531460285837, 0.000359861282267438, 0.00083292801712631],
    [-0.00424995398108918, 0.00696436833975123, -0.0165521814986613, -0.0179146676089923, -0.00184687044047161, -0.000743028872933415, -2.66344574785958e-05, 0.00030290744845503],
    [-0.006239680902532, 0.00391285905613357, -0.0141192263903315, -0.0143578919004737, -0.00142218515693204, -0.000390649535248588, 0.00210379129347649, 0.000170910842312688],
    [-0.00517991819175823, 0.00213537813578446, -0.00290323567150175, -0.0114787830264871, -0.000668866979545004, -0.000198150336332562, 0.00100554112038933, 0.000202936661242743],
    [-0.00294119006118221, 0.00250689802149695, -0.00501174709742913, -0.00860715205356177, -0.000355782972610707, -9.54064921596278e-05, 0.000523972166152171, 0.000196148813601954],
    [-0.00254463442781505, 0.0023347608562343, -0.00502996282845602, -0.00646200655965168, -0.000230380161935134, -3.86084160183337e-05, 0.000309676451615011, 0.00018163578279577],
    [-0.001722065526929, 0.00131805672843555, -0.00137206477097274, -0.00492567526853449, -0.000186323789233122, -5.98976144521513e-06, 0.00021257355360274, 0.000169137894378578],
    [-0.000737220348951739, 0.00121036367263216, -0.00209741994467394, -0.00361909108633918, -0.000179004493060767, 1.36394653703376e-05, 0.000167643149345301, 0.000160759821407603],
    [-0.000476101686112118, 0.00106856929800792, -0.00201481202437725, -0.00265993810527165, -0.000189958956273374, 2.62375439937724e-05, 0.00014638594873063, 0.000156207630472959],
    [-0.000514064018108051, 0.000932779287927787, -0.00166880481146214, -0.00192491707106712, -0.000211886076553325, 3.50949112404578e-05, 0.000136115251404676, 0.000154673085440998],
    [-0.000384414592463633, 0.000540051955458476, -0.000599548243750192, -0.00141633728656099, -0.000242343180357836, 4.21043650139466e-05, 0.00013106834166828, 0.000155435475446077],
])

TWO_REACTOR_REFERENCE_SCHEDULE = (
    3, 1, 3, 2, 0, 3, 0, 1, 0, 0, 0, 3, 0, 1, 3, 2, 1, 0, 0, 0, 3, 1, 0, 0, 1, 0, 0, 0, 1, 3,
)


# Input applied to each actuator at each step of the same reference run
# (zero when the actuator was not scheduled).
TWO_REACTOR_REFERENCE_INPUTS = np.array([
    [0.0, 0.0, 0.0, 7.23143867120409],
    [0.0, 10.2359577043621, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.851945220797],
    [0.0, 0.0, 0.685891963108391, 0.0],
    [0.253740607581983, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.379438859859105],
    [0.205277512716743, 0.0, 0.0, 0.0],
    [0.0, 0.505350945959599, 0.0, 0.0],
    [0.115879965770164, 0.0, 0.0, 0.0],
    [0.0906324268959922, 0.0, 0.0, 0.0],
    [0.0760857932629774, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0851871591948722],
    [0.0340187239450731, 0.0, 0.0, 0.0],
    [0.0, -0.154289999855366, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0383064757746671],
    [0.0, 0.0, -0.0163973798319061, 0.0],
    [0.0, -0.0835338414528943, 0.0, 0.0],
    [0.0124621988315757, 0.0, 0.0, 0.0],
    [0.0101304168873865, 0.0, 0.0, 0.0],
    [0.00789183316027064, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, -0.0101696960947368],
    [0.0, -0.0410865301296355, 0.0, 0.0],
    [0.00320781998779307, 0.0, 0.0, 0.0],
    [0.00213293325681041, 0.0, 0.0, 0.0],
    [0.0, -0.0141546323704795, 0.0, 0.0],
    [0.00114760218020349, 0.0, 0.0, 0.0],
    [0.000916565352934939, 0.0, 0.0, 0.0],
    [0.000731668428797572, 0.0, 0.0, 0.0],
    [0.0, -0.00339452085295799, 0.0, 0.0],
    [0.0, 0.0, 0.0, -0.0010858375186098],
])
