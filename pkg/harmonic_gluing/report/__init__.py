from .records import InvariantCheck, ResultRecord, config_hash, stage
from .writers import (
    log_table,
    log_values,
    prepare_output_dir,
    read_table,
    row_columns,
    write_json,
    write_record,
    write_table,
    write_triplets,
)
