void tagged(int n, int A[const restrict static n], int t[const restrict static n], int B[const restrict static n])
{
#pragma pencil independent (s1)
  for (int i = 0; i < n; i++) {
s1: B[i] = A[i] + t[i];
    A[i] = B[i] - 1;
  }
}
