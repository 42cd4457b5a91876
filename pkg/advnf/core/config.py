from pydantic import model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    PROJECT_NAME: str = "AdvNF"
    ENVIRONMENT: str = "development"
    LOG_LEVEL: str = "INFO"
    OUTPUT_DIR: str = "runs"
    DEFAULT_JOBS: int = 1
    SHOW_PROGRESS: bool = False
    # Phase-2 iterations between periodic checkpoints; 0 disables them.
    CHECKPOINT_EVERY: int = 0

    model_config = SettingsConfigDict(
        env_prefix="ADVNF_",
        env_file=".env",
        env_ignore_empty=True,
        extra="ignore",
    )

    @model_validator(mode="after")
    def normalize_runtime_values(self):
        self.LOG_LEVEL = (self.LOG_LEVEL or "INFO").strip().upper()
        if self.DEFAULT_JOBS < 1:
            self.DEFAULT_JOBS = 1
        if self.CHECKPOINT_EVERY < 0:
            self.CHECKPOINT_EVERY = 0
        return self


settings = Settings()
