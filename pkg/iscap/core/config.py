"""Application configuration."""

from pathlib import Path

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-level configuration from environment variables (prefix ``ISCAP_``)."""

    # Logging
    log_level: str = "INFO"
    log_json: bool = True

    # Conic solver
    solver: str = "CLARABEL"
    sdp_tol: float = 1e-7
    sdp_max_iter: int = 200
    rank_cutoff: float = 1e-6
    activity_tol: float = 1e-6

    # ER covariance quadrature
    quadrature_tol: float = 1e-7
    quadrature_max_order: int = 512
    covariance_workers: int = 4

    # Experiments
    sweep_workers: int = 1
    desk_scale_antennas: int = 16
    full_scale_antennas: int = 64
    powermap_resolution: int = 90
    out_dir: Path = Path("results")
    seed: int = 0

    class Config:
        """Pydantic configuration."""

        env_prefix = "ISCAP_"
        env_file = ".env"


settings = Settings.model_validate({})
