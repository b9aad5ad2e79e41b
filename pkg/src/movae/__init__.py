"""Musical timbre transfer with modulated variational autoencoders.

Submodules:
    audio       -- waveform container, WAV I/O, resampling
    spectral    -- log-frequency magnitude frontend (analysis, chunking,
                   normalization, iterative inversion)
    corpus      -- synthetic instrument-note generator, WAV ingestion,
                   dataset assembly and train/test splitting
    conditioning-- categorical labels, one-hot encoding, FiLM generators
    model       -- Gaussian encoder/decoder networks (three variants)
    objectives  -- NLL, KLD, multi-kernel MMD, cycle consistency, composite
    trainer     -- schedules, Adam, training loop, checkpointing
    evaluation  -- RMSE/LSD/MMD/k-NN metrics, descriptors, latent topology
    transfer    -- chunk and melody timbre transfer
    service     -- HTTP facade for interactive exploration
"""

__version__ = "0.1.0"
