from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    threads: int = 4
    quad_rtol: float = 1e-6
    quad_min_order: int = 8
    quad_max_order: int = 64
    quad_chunk_points: int = 2**17
    quad_cancellation_rtol: float = 1e-10
    qmc_log2_points: int = 14
    qmc_replicates: int = 8
    qmc_rotations: int = 8
    sweep_rtol: float = 1e-4
    sweep_points: int = 12
    sweep_eps0: float = 1e-2
    seed: int = 0
    report_digits: int = 12
    report_timing: bool = False
    golden_path: str = "goldens.json"

    model_config = {"env_file": ".env", "env_prefix": "HOLOFLOW_"}


settings = Settings()
