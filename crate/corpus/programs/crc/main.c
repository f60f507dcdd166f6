extern int msg[32];
int crc16(int n);

int main(int a, int b) {
    int n = b & 31;
    for (int i = 0; i < n; i++)
        msg[i] = (a >> (i & 7)) + i * 37;
    return crc16(n);
}
