import logging
import os

FORMAT = "%(asctime)s - %(message)s"
DATEFMT = "[%d/%m/ - %H:%M:%S]"

def configure_logger(name, log_dir="."):
    logging.basicConfig(
        filename=os.path.join(log_dir, f"{name}_output.txt"),
        level=logging.INFO,
        format=FORMAT,
        datefmt=DATEFMT
    )

    logger = logging.getLogger(name)
    return logger

### Isolated file logger for a single run, clearing handlers to avoid duplication
def set_log(log_filename, name="spinfade"):
    logger = logging.getLogger(name)
    logger.setLevel(logging.INFO)
    logger.propagate = False

    for handler in list(logger.handlers):
        handler.close()
    logger.handlers = []

    file_handler = logging.FileHandler(log_filename)
    file_handler.setFormatter(logging.Formatter(fmt=FORMAT, datefmt=DATEFMT))
    logger.addHandler(file_handler)

    return logger
