int msg[32];

/* Bitwise CRC-16/CCITT over n message bytes. */
int crc16(int n) {
    int crc = 65535;
    for (int i = 0; i < n; i++) {
        crc = crc ^ ((msg[i] & 255) << 8);
        for (int bit = 0; bit < 8; bit++) {
            if ((crc & 32768) != 0)
                crc = ((crc << 1) ^ 4129) & 65535;
            else
                crc = (crc << 1) & 65535;
        }
    }
    return crc;
}
