"""Compare the four demixing updates on the same scene.

All four methods fit the same separation model; they differ in how the
background filters are treated. auxiva updates all M rows and discards
the extras afterwards, ip1 refreshes the whole background block once
per sweep, ip3 refreshes it after every target row, and ip2 solves the
single-target problem in one eigenvector step per bin. The table
reports quality as SDR improvement over the mixture and speed as the
real-time factor of the solver.
"""

from overiva.io import AudioBuffer
from overiva.optimizer import RunConfig
from overiva.pipeline import separate_buffer
from overiva.simulate import SceneSpec, rtf, sdr, synthesize
from overiva.stft import StftConfig

spec = SceneSpec(
    n_sources=1,
    n_noises=2,
    n_mics=4,
    sinr_db=0.0,
    rt60_ms=120.0,
    sample_rate=8000,
    duration_s=4.0,
    seed=1,
)
scene = synthesize(spec)
mixture = AudioBuffer(spec.sample_rate, scene.mixture)
reference = scene.target_images[0]
baseline = sdr(reference, scene.mixture)
stft_cfg = StftConfig(1024, 256)
print(f"mixture SDR {baseline:.2f} dB; improvements below\n")

print("method   iters   SDR gain      rtf")
for method, iters in (("auxiva", 50), ("ip1", 50), ("ip3", 50), ("ip2", 3)):
    images, result = separate_buffer(
        mixture, 1, RunConfig(method=method, iterations=iters), stft_cfg
    )
    gain = sdr(reference, images[0].samples) - baseline
    speed = rtf(result.wall_time, spec.duration_s)
    print(f"{method:7s} {iters:5d}   +{gain:5.2f} dB   {speed:.4f}")

print(
    "\nip1 and ip3 coincide exactly when there is one target; ip2 reaches"
    "\ncomparable quality in a fraction of the time."
)
